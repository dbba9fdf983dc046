#include "focus/model.hpp"

#include <stdexcept>

#include "focus/image.hpp"

namespace focus {

namespace {

BackboneConfig backbone_config(const RunConfig& cfg) {
    BackboneConfig b;
    b.patch = cfg.patch;
    b.blocks = cfg.backbone_blocks;
    b.width = cfg.cb;
    b.heads = cfg.backbone_heads;
    return b;
}

}  // namespace

FocusModel::FocusModel(ParamStore& ps, const RunConfig& cfg)
    : cfg_(cfg),
      backbone_(ps, backbone_config(cfg), cfg.image_size / cfg.patch, cfg.image_size / cfg.patch),
      edge_net_(ps, cfg.d),
      fusion_(ps, cfg.cb, cfg.d, cfg.heads, cfg.points),
      pixel_decoder_(ps, cfg.d, cfg.heads, cfg.points, cfg.n_enc),
      ground_decoder_(ps, cfg.c, cfg.heads, cfg.l_dec) {
    validate_config(cfg);
    // ground queries score straight against pyramid tokens (no projection),
    // so the two widths must agree
    if (cfg.c != cfg.d)
        throw std::invalid_argument("model: query width c must equal feature width d");
    if (cfg.backbone_blocks < 4)
        throw std::invalid_argument("model: need at least 4 backbone blocks to tap");
    for (long i = 0; i < 4; ++i)
        tap_index_.push_back((i + 1) * cfg.backbone_blocks / 4 - 1);
    if (cfg.clip_enabled)
        refiner_ = std::make_unique<ClipRefiner>(ps, cfg.s, cfg.clip_image_size, cfg.clip_tau,
                                                 cfg.prompt_foreground, cfg.prompt_background);
}

ModelOutput FocusModel::forward(const Tensor& image) const {
    if (image.rank() != 3 || image.dim(0) != 3)
        throw std::invalid_argument("model: input must be [3,H,W]");
    const long s = cfg_.image_size;

    ModelOutput out;
    {
        NoGrad ng;  // input preparation is data, not graph
        out.input = (image.dim(1) == s && image.dim(2) == s) ? image : resize_bilinear(image, s, s);
        CannyParams cp;
        cp.sigma = cfg_.canny_sigma;
        cp.low = cfg_.canny_low;
        cp.high = cfg_.canny_high;
        Tensor edges = canny(to_grayscale(out.input), cp);
        out.edge_overlay = overlay_edges(out.input, edges, cfg_.overlay_strength);
    }

    BackboneOutput bb = backbone_.forward(out.input);
    std::vector<Tensor> taps;
    for (long idx : tap_index_) taps.push_back(bb.taps[idx]);

    EdgeFeatures ef = edge_net_.forward(out.edge_overlay);
    Pyramid assembled = fusion_.apply(taps, bb.grid_h, bb.grid_w, ef);
    PixelDecoder::Refined refined = pixel_decoder_.apply(assembled);

    out.ground_mask = init_attention_mask(bb.final, bb.grid_h, bb.grid_w, s / 32, s / 32);
    out.preds = ground_decoder_.forward(refined, out.ground_mask.m0);
    return out;
}

}  // namespace focus
