#include "focus/clip_refiner.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "focus/rng.hpp"

namespace focus {

Tensor fuse_mask(const Tensor& img, const Tensor& mask_logits) {
    if (!img.defined() || img.rank() != 3 || img.dim(0) != 3)
        throw std::invalid_argument("fuse_mask: expected [3,H,W] image");
    if (!mask_logits.defined() || mask_logits.rank() != 2)
        throw std::invalid_argument("fuse_mask: expected [h,w] mask logits");
    Tensor prob = resize_bilinear(sigmoid(mask_logits), img.dim(1), img.dim(2));
    return mul(img, prob);  // [H,W] broadcasts over the channel axis
}

namespace {
constexpr long kBuckets = 256;
}

ClipRefiner::ClipRefiner(ParamStore& ps, long s, long image_size, double tau,
                         const std::string& fg_prompt, const std::string& bg_prompt)
    : s_(s), image_size_(image_size), tau_(tau), fg_prompt_(fg_prompt), bg_prompt_(bg_prompt) {
    if (tau <= 0) throw std::invalid_argument("ClipRefiner: tau must be positive");
    if (image_size < 8) throw std::invalid_argument("ClipRefiner: encoder input too small");
    c1_ = make_conv2d(ps, "clip_refiner.c1", 3, 16, 3, 2, 1, true, Init::Kaiming);
    c2_ = make_conv2d(ps, "clip_refiner.c2", 16, 32, 3, 2, 1, true, Init::Kaiming);
    c3_ = make_conv2d(ps, "clip_refiner.c3", 32, 32, 3, 2, 1, true, Init::Kaiming);
    img_proj_ = make_linear(ps, "clip_refiner.img_proj", 32, s);
    token_table_ = ps.get("clip_refiner.tokens", {kBuckets, s}, Init::Normal02, false);
    text_proj_ = make_linear(ps, "clip_refiner.text_proj", s, s);
    // the towers stay fixed: mark everything created above as frozen
    for (const Tensor& t : {c1_.w, c1_.b, c2_.w, c2_.b, c3_.w, c3_.b, img_proj_.w, img_proj_.b,
                            text_proj_.w, text_proj_.b})
        const_cast<Tensor&>(t).set_requires_grad(false);

    NoGrad ng;
    Tensor t_fg = encode_text(fg_prompt);
    Tensor t_bg = encode_text(bg_prompt);
    double cos = 0.0;
    for (long i = 0; i < s; ++i) cos += t_fg.values()[i] * t_bg.values()[i];
    if (cos > 1.0 - 1e-9)
        throw std::invalid_argument(
            "ClipRefiner: the two prompts collide under the hashing text encoder");
}

Tensor ClipRefiner::encode_image(const Tensor& img) const {
    if (!img.defined() || img.rank() != 3 || img.dim(0) != 3)
        throw std::invalid_argument("ClipRefiner::encode_image: expected [3,H,W]");
    Tensor x = img;
    if (img.dim(1) != image_size_ || img.dim(2) != image_size_)
        x = resize_bilinear(x, image_size_, image_size_);
    x = gelu(c1_.apply(x));
    x = gelu(c2_.apply(x));
    x = c3_.apply(x);  // [32, g, g]
    long hw = x.dim(1) * x.dim(2);
    Tensor pooled = sum_axis(reshape(x, {32, hw}), 1);            // [32]
    pooled = mul(pooled, Tensor::scalar(1.0 / static_cast<double>(hw)));
    Tensor emb = img_proj_.apply(reshape(pooled, {1, 32}));       // [1, S]
    return reshape(l2_normalize(emb), {s_});
}

Tensor ClipRefiner::encode_text(const std::string& prompt) const {
    std::istringstream is(prompt);
    std::string word;
    std::vector<long> ids;
    while (is >> word) ids.push_back(static_cast<long>(hash64(word) % kBuckets));
    if (ids.empty()) throw std::invalid_argument("ClipRefiner::encode_text: empty prompt");
    Tensor acc;
    for (long id : ids) {
        Tensor row = slice(token_table_, 0, id, 1);  // [1, S]
        acc = acc.defined() ? add(acc, row) : row;
    }
    acc = mul(acc, Tensor::scalar(1.0 / static_cast<double>(ids.size())));
    return reshape(l2_normalize(text_proj_.apply(acc)), {s_});
}

Tensor contrastive_pair_loss(const Tensor& sim_ff, const Tensor& sim_fb, const Tensor& sim_bf,
                             const Tensor& sim_bb, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("contrastive_pair_loss: tau must be positive");
    Tensor inv_tau = Tensor::scalar(1.0 / tau);
    Tensor a_ff = mul(sim_ff, inv_tau);
    Tensor a_fb = mul(sim_fb, inv_tau);
    Tensor a_bf = mul(sim_bf, inv_tau);
    Tensor a_bb = mul(sim_bb, inv_tau);
    // -log softmax written as softplus of the logit difference (2 classes)
    Tensor l_i2t = add(softplus(sub(a_fb, a_ff)), softplus(sub(a_bf, a_bb)));
    Tensor l_t2i = add(softplus(sub(a_bf, a_ff)), softplus(sub(a_fb, a_bb)));
    return mul(add(l_i2t, l_t2i), Tensor::scalar(0.25));
}

Tensor ClipRefiner::loss(const Tensor& img, const Tensor& fg_mask_logits,
                         const Tensor& bg_mask_logits) const {
    // encoded here, not cached at construction, so parameter restores
    // (checkpoint loads) are reflected without rebuilding the refiner
    Tensor t_fg, t_bg;
    {
        NoGrad ng;
        t_fg = encode_text(fg_prompt_);
        t_bg = encode_text(bg_prompt_);
    }
    Tensor i_f = encode_image(fuse_mask(img, fg_mask_logits));
    Tensor i_b = encode_image(fuse_mask(img, bg_mask_logits));
    return contrastive_pair_loss(sum(mul(i_f, t_fg)), sum(mul(i_f, t_bg)),
                                 sum(mul(i_b, t_fg)), sum(mul(i_b, t_bg)), tau_);
}

}  // namespace focus
