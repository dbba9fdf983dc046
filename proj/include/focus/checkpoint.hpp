#pragma once

#include <string>

#include "focus/nn.hpp"
#include "focus/optim.hpp"
#include "focus/serialize.hpp"

namespace focus {

struct CheckpointMeta {
    long schema_version = 1;
    long step = 0;
    std::string config_text;  // canonical config of the run that wrote it
};

// Parameters + optional optimizer state + meta, written to a temp file in
// the same directory and renamed into place so readers never see a partial
// checkpoint.
void save_checkpoint(const std::string& path, const ParamStore& ps, const AdamW* opt,
                     const CheckpointMeta& meta);

struct LoadedCheckpoint {
    Archive archive;
    CheckpointMeta meta;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

// Copies every matching parameter value out of the archive. A parameter
// missing from the archive throws; extra archive entries (for example a
// contrastive refiner the current config disables) are ignored.
void restore_params(ParamStore& ps, const Archive& ar);

}  // namespace focus
