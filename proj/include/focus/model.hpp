#pragma once

#include <memory>
#include <vector>

#include "focus/backbone.hpp"
#include "focus/clip_refiner.hpp"
#include "focus/config.hpp"
#include "focus/edge_enhancer.hpp"
#include "focus/seg_decoder.hpp"

namespace focus {

struct ModelOutput {
    std::vector<Prediction> preds;  // layer 0 (initial queries) .. layer L
    GroundMask ground_mask;         // PCA-seeded attention mask and fg map
    Tensor input;                   // [3,S,S] the resized network input
    Tensor edge_overlay;            // [3,S,S] edge-enhanced copy fed to the edge path
};

// The full pipeline: backbone taps + convolutional edge pyramid, fused by
// injector/extractor pairs, refined by the pixel decoder, then decoded by
// two ground queries whose first attention mask is seeded from the top
// principal component of the backbone features.
class FocusModel {
public:
    FocusModel(ParamStore& ps, const RunConfig& cfg);

    // any [3,H,W]; resized (bilinear) to the configured square input
    ModelOutput forward(const Tensor& image) const;

    const ClipRefiner* refiner() const { return refiner_.get(); }
    long input_size() const { return cfg_.image_size; }
    const RunConfig& config() const { return cfg_; }

private:
    RunConfig cfg_;
    Backbone backbone_;
    EdgeNet edge_net_;
    FusionStack fusion_;
    PixelDecoder pixel_decoder_;
    GroundDecoder ground_decoder_;
    std::unique_ptr<ClipRefiner> refiner_;
    std::vector<long> tap_index_;
};

}  // namespace focus
