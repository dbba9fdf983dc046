#include "focus/backbone.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "focus/image.hpp"

namespace focus {

Backbone::Backbone(ParamStore& ps, const BackboneConfig& cfg, long grid_h, long grid_w)
    : cfg_(cfg), grid_h_(grid_h), grid_w_(grid_w) {
    if (grid_h <= 0 || grid_w <= 0) throw std::invalid_argument("Backbone: empty grid");
    patch_embed_ = make_conv2d(ps, "backbone.patch", 3, cfg.width, cfg.patch, cfg.patch, 0);
    pos_ = ps.get("backbone.pos", {grid_h * grid_w, cfg.width}, Init::Normal02);
    for (long i = 0; i < cfg.blocks; ++i) {
        std::string p = "backbone.blk" + std::to_string(i);
        Block b;
        b.ln1 = make_layer_norm(ps, p + ".ln1", cfg.width);
        b.attn = make_mha(ps, p + ".attn", cfg.width, cfg.heads);
        b.ln2 = make_layer_norm(ps, p + ".ln2", cfg.width);
        b.mlp = make_mlp(ps, p + ".mlp", cfg.width, cfg.width * cfg.mlp_ratio, cfg.width);
        blocks_.push_back(std::move(b));
    }
    final_norm_ = make_layer_norm(ps, "backbone.final_norm", cfg.width);
}

BackboneOutput Backbone::forward(const Tensor& img) const {
    if (!img.defined() || img.rank() != 3 || img.dim(0) != 3 ||
        img.dim(1) != grid_h_ * cfg_.patch || img.dim(2) != grid_w_ * cfg_.patch)
        throw std::invalid_argument("Backbone::forward: expected [3," +
                                    std::to_string(grid_h_ * cfg_.patch) + "," +
                                    std::to_string(grid_w_ * cfg_.patch) + "], got " +
                                    shape_str(img.shape()));
    // non-overlapping patch embedding: conv stride = kernel = patch
    Tensor x = patch_embed_.apply(img);                       // [width, gh, gw]
    x = reshape(x, {cfg_.width, grid_h_ * grid_w_});
    x = transpose(x);                                         // [N, width]
    x = add(x, pos_);

    BackboneOutput out;
    out.grid_h = grid_h_;
    out.grid_w = grid_w_;
    for (const Block& b : blocks_) {
        Tensor y = b.ln1.apply(x);
        x = add(x, b.attn.apply(y, y, y));
        x = add(x, b.mlp.apply(b.ln2.apply(x)));
        out.taps.push_back(x);
    }
    out.final = final_norm_.apply(x);
    return out;
}

GroundMask init_attention_mask(const Tensor& feats, long grid_h, long grid_w, long th, long tw) {
    if (!feats.defined() || feats.rank() != 2 || feats.dim(0) != grid_h * grid_w)
        throw std::invalid_argument("init_attention_mask: features must be [grid_h*grid_w, C]");
    if (th <= 0 || tw <= 0) throw std::invalid_argument("init_attention_mask: empty target grid");
    long n = feats.dim(0), c = feats.dim(1);

    GroundMask gm;
    PcaResult pca = pca_top_component(feats.values().data(), n, c);
    gm.scores = pca.scores;
    gm.degenerate = pca.degenerate;
    if (pca.degenerate) {
        // constant features carry no split: leave both queries unmasked
        gm.m0 = Tensor::zeros({2, th * tw});
        gm.fg = Tensor::zeros({th, tw});
        return gm;
    }

    // binarize the projections at the token grid, move to the target grid,
    // and re-threshold so the result is binary again
    Tensor bin = make_tensor({grid_h, grid_w}, DType::F64);
    for (long i = 0; i < n; ++i) bin.raw()[i] = pca.scores[i] > 0.0 ? 1.0 : 0.0;
    Tensor res = resize_bilinear(bin, th, tw);

    const double ninf = -std::numeric_limits<double>::infinity();
    gm.fg = make_tensor({th, tw}, DType::F64);
    gm.m0 = make_tensor({2, th * tw}, DType::F64);
    for (long i = 0; i < th * tw; ++i) {
        bool f = res.values()[i] > 0.5;
        gm.fg.raw()[i] = f ? 1.0 : 0.0;
        gm.m0.raw()[i] = f ? 0.0 : ninf;
        gm.m0.raw()[th * tw + i] = f ? ninf : 0.0;
    }
    return gm;
}

}  // namespace focus
