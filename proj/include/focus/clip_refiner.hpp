#pragma once

#include <string>

#include "focus/nn.hpp"
#include "focus/tensor.hpp"

namespace focus {

// img * sigmoid(mask_logits upsampled to the image grid), every channel.
// Differentiable in both inputs; this is how mask gradients reach the
// contrastive objective.
Tensor fuse_mask(const Tensor& img, const Tensor& mask_logits);  // [3,H,W], [h,w]

// Symmetric two-pair InfoNCE on raw cosine similarities: scaled by 1/tau,
// then 0.25 * [sp(a_fb-a_ff) + sp(a_bf-a_bb) + sp(a_bf-a_ff) + sp(a_fb-a_bb)].
// All-equal similarities give exactly ln 2; a perfect +-1 split gives
// ln(1 + exp(-2/tau)).
Tensor contrastive_pair_loss(const Tensor& sim_ff, const Tensor& sim_fb, const Tensor& sim_bf,
                             const Tensor& sim_bb, double tau);

// Frozen image/text towers with a symmetric InfoNCE loss over the
// foreground/background pair. Both encoders are random but fixed: the loss
// shapes the masks, never the towers. Text runs through a hashing embedder
// (whitespace tokens -> FNV bucket -> frozen table -> mean pool -> frozen
// projection), so no external vocabulary is needed.
class ClipRefiner {
public:
    ClipRefiner(ParamStore& ps, long s, long image_size, double tau,
                const std::string& fg_prompt, const std::string& bg_prompt);

    Tensor encode_image(const Tensor& img) const;        // [3,H,W] -> [S], L2-normalized
    Tensor encode_text(const std::string& prompt) const; // -> [S], L2-normalized

    // L = (L_img->txt + L_txt->img)/2 over the 2x2 similarity matrix of the
    // fused foreground/background images against the two prompt embeddings.
    // Uniform similarities give exactly ln 2.
    Tensor loss(const Tensor& img, const Tensor& fg_mask_logits,
                const Tensor& bg_mask_logits) const;

    double tau() const { return tau_; }

private:
    long s_, image_size_;
    double tau_;
    Conv2dLayer c1_, c2_, c3_;
    Linear img_proj_;
    Tensor token_table_;  // [buckets, S]
    Linear text_proj_;
    // encoded per loss() call so restored checkpoints take effect; the
    // towers are frozen, so this costs a few tiny ops and records nothing
    std::string fg_prompt_, bg_prompt_;
};

}  // namespace focus
