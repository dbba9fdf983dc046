#pragma once

#include <map>
#include <string>

#include "focus/tensor.hpp"

namespace focus {

// Flat named-tensor container with a free-form JSON meta blob. Doubles are
// stored as raw little-endian bytes, so save/load round trips bit-exactly.
struct Archive {
    std::map<std::string, Tensor> tensors;
    std::string meta;
};

void save_archive(const std::string& path, const Archive& a);
Archive load_archive(const std::string& path);

}  // namespace focus
