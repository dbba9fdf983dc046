#pragma once

#include <vector>

#include "focus/nn.hpp"
#include "focus/tensor.hpp"

namespace focus {

// Desk-scale stand-in for a large self-supervised vision transformer: a
// patch-16 pre-norm ViT trained jointly with everything else. It produces
// one token map per block (the taps the fusion path grafts onto) plus the
// final normalized features used to seed the ground queries.
struct BackboneConfig {
    long patch = 16;
    long blocks = 4;
    long width = 64;   // token channels
    long heads = 4;
    long mlp_ratio = 2;
};

struct BackboneOutput {
    std::vector<Tensor> taps;  // one [N, width] per block, in depth order
    Tensor final;              // layer-normalized last tap, [N, width]
    long grid_h = 0, grid_w = 0;
};

class Backbone {
public:
    // grid is fixed at construction (position table size); inputs must be
    // [3, grid_h*patch, grid_w*patch]
    Backbone(ParamStore& ps, const BackboneConfig& cfg, long grid_h, long grid_w);

    BackboneOutput forward(const Tensor& img) const;

    const BackboneConfig& config() const { return cfg_; }
    long tokens() const { return grid_h_ * grid_w_; }

private:
    BackboneConfig cfg_;
    long grid_h_, grid_w_;
    Conv2dLayer patch_embed_;
    Tensor pos_;
    struct Block {
        LayerNormLayer ln1, ln2;
        MultiheadAttention attn;
        Mlp mlp;
    };
    std::vector<Block> blocks_;
    LayerNormLayer final_norm_;
};

// Ground-query attention seed derived from the backbone's final features:
// the top principal component splits tokens into a foreground lobe
// (positive scores) and its complement.
struct GroundMask {
    Tensor m0;     // [2, th*tw] additive mask rows: 0 visible, -inf hidden
    Tensor fg;     // [th, tw] binary foreground map (row 0 of m0)
    std::vector<double> scores;  // raw per-token projections at the source grid
    bool degenerate = false;     // constant features: m0 is all-visible
};

// feats: [grid_h*grid_w, C] token features (read as plain values). The binary
// split is computed at the token grid, resized bilinearly to th x tw, and
// re-thresholded at 0.5. Row 1 is the exact complement of row 0.
GroundMask init_attention_mask(const Tensor& feats, long grid_h, long grid_w, long th, long tw);

}  // namespace focus
