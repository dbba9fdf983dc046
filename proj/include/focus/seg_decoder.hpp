#pragma once

#include <vector>

#include "focus/edge_enhancer.hpp"
#include "focus/nn.hpp"

namespace focus {

// Output of one decoder stage: two queries, each with a mask at 1/4
// resolution, two class logits (column 0 = foreground, 1 = background) and a
// normalized (cx,cy,w,h) box.
struct Prediction {
    Tensor mask_logits;   // [2, H/4, W/4]
    Tensor class_logits;  // [2, 2]
    Tensor boxes;         // [2, 4] in [0,1]
};

// Deformable self-attention over the 1/8..1/32 levels plus the per-pixel
// embedding: the 1/4 level summed with the upsampled refined 1/8 level.
// n_enc == 0 passes tokens through untouched.
class PixelDecoder {
public:
    PixelDecoder(ParamStore& ps, long d, long heads, long points, long n_enc);

    struct Refined {
        Pyramid levels;      // 1/8, 1/16, 1/32 after refinement
        Tensor pixel_embed;  // [d, H/4, W/4]
    };
    Refined apply(const Pyramid& assembled) const;  // expects the 4-level pyramid

private:
    struct Layer {
        LayerNormLayer ln1, ln2;
        DeformAttn attn;
        Mlp ffn;
    };
    std::vector<Layer> layers_;
};

// sigmoid, resize to the level grid, then threshold at 0.5: visible (0)
// where the query's current mask is confident, hidden (-inf) elsewhere.
// Probability exactly 0.5 (logit 0) is hidden. The result is a constant.
Tensor mask_to_attention(const Tensor& mask_logits, long lh, long lw);

// Two learned queries polished by L_dec layers of masked cross-attention
// (scores = (X + E_q) K^T / sqrt(C) + M, straight against the level tokens),
// self-attention and a feed-forward block, all pre-norm residual. K/V cycle
// deepest-to-shallowest: 1/32, 1/16, 1/8, 1/32, ... The layer-0 prediction
// comes straight from the learned queries for deep supervision.
class GroundDecoder {
public:
    GroundDecoder(ParamStore& ps, long c, long heads, long l_dec);

    // m0 must match the first level in the cycle (the 1/32 grid)
    std::vector<Prediction> forward(const PixelDecoder::Refined& in, const Tensor& m0) const;

    Prediction predict(const Tensor& x, const Tensor& pix_tokens, long h4, long w4) const;

    Tensor queries() const { return x0_; }

private:
    long c_, l_dec_;
    Tensor x0_, eq_;  // [2, C]
    struct Layer {
        LayerNormLayer ln1, ln2;
        MultiheadAttention self;
        Mlp ffn;
    };
    std::vector<Layer> layers_;
    Mlp mask_mlp_, cls_mlp_, box_mlp_;
};

}  // namespace focus
