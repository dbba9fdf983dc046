#pragma once

#include <string>
#include <vector>

#include "focus/backbone.hpp"
#include "focus/nn.hpp"
#include "focus/tensor.hpp"

namespace focus {

struct LevelSpec {
    long h = 0, w = 0;
    long count() const { return h * w; }
};

// Tokens of several 2-D grids flattened row-major and stacked on axis 0:
// level l occupies rows [offsets[l], offsets[l+1]).
struct Pyramid {
    Tensor tokens;  // [N_total, D]
    std::vector<LevelSpec> levels;
    std::vector<long> offsets;  // levels.size()+1 entries, offsets.back() == N_total

    long count() const { return static_cast<long>(levels.size()); }
    Tensor level(long i) const;        // [h*w, D] token rows of level i
    Tensor level_plane(long i) const;  // [D, h, w] restored 2-D layout
};

Pyramid make_pyramid(const std::vector<Tensor>& level_tokens, const std::vector<LevelSpec>& specs);

// pixel-center reference points of every token, (x,y) normalized to [0,1]
Tensor grid_reference_points(const std::vector<LevelSpec>& specs);

// Multi-scale deformable attention. Every query predicts, per head and per
// value level, `points` sampling offsets plus mixing logits; the logits are
// softmaxed jointly over levels*points of the head, so each head's samples
// mix with weights that sum to one. Offsets are normalized by the level size
// before being added to the query's reference point. Both predictors start
// at zero, so an untrained module averages the samples at the reference.
struct DeformAttn {
    long dq = 0;      // query/output width
    long heads = 0;   // dq % heads == 0
    long points = 0;
    long levels = 0;
    Linear offset_fc, weight_fc, value_fc, out_fc;

    // queries [Nq,dq], refs [Nq,2] in [0,1], vals.count() == levels
    Tensor apply(const Tensor& queries, const Tensor& refs, const Pyramid& vals) const;
};
DeformAttn make_deform_attn(ParamStore& ps, const std::string& name, long dq, long dv, long heads,
                            long points, long levels);

// Convolutional edge path: a strided stem to 1/4 resolution followed by
// three 2-block residual stages at 1/8, 1/16 and 1/32, each projected to the
// shared width D by a 1x1 convolution.
struct EdgeFeatures {
    Tensor stem;      // [D, H/4, W/4]
    Pyramid pyramid;  // levels 1/8, 1/16, 1/32
};

class EdgeNet {
public:
    EdgeNet(ParamStore& ps, long d);
    EdgeFeatures forward(const Tensor& img) const;  // [3,H,W], 32 | H,W

private:
    struct ResBlock {
        Conv2dLayer c1, c2, sk;
        GroupNormLayer g1, g2, gs;
        bool projected = false;
        Tensor apply(const Tensor& x) const;
    };
    long d_;
    Conv2dLayer stem_conv_, stem_proj_;
    GroupNormLayer stem_gn_;
    std::vector<ResBlock> blocks_;  // 3 stages x 2
    std::vector<Conv2dLayer> proj_;
};

// One fusion pair: the injector grafts edge detail onto a backbone tap
// through deformable attention gated by a zero-initialized channel scale
// (identity at start); the extractor refreshes the edge pyramid from the
// following tap and mixes it with a conv-FFN that restores each level's 2-D
// layout for a shared depthwise 3x3.
struct Injector {
    LayerNormLayer ln_q, ln_v;
    DeformAttn attn;
    Tensor gamma;  // [Cb], zeros
    Tensor apply(const Tensor& tap, const Tensor& refs, const Pyramid& edge) const;
};

struct Extractor {
    LayerNormLayer ln_q, ln_v;
    DeformAttn attn;  // single value level (the backbone grid)
    Linear fc1, fc2;
    Tensor dw_w, dw_b;  // depthwise 3x3 over the FFN hidden channels
    Tensor apply(const Pyramid& edge, const Tensor& next_tap, long bh, long bw) const;
};

// Four injector/extractor pairs plus the final level assembly: tap s is
// projected to D, resized to scale s (1/4 shallow ... 1/32 deep), and summed
// with the stem map (1/4) or the refined edge level (1/8..1/32).
class FusionStack {
public:
    FusionStack(ParamStore& ps, long cb, long d, long heads, long points);

    // taps: exactly 4 backbone token maps at the backbone grid
    Pyramid apply(const std::vector<Tensor>& taps, long bh, long bw,
                  const EdgeFeatures& ef) const;

private:
    long cb_, d_;
    std::vector<Injector> inj_;
    std::vector<Extractor> ext_;
    std::vector<Linear> tap_proj_;
};

}  // namespace focus
