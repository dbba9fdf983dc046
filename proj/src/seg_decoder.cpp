#include "focus/seg_decoder.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace focus {

PixelDecoder::PixelDecoder(ParamStore& ps, long d, long heads, long points, long n_enc) {
    for (long i = 0; i < n_enc; ++i) {
        std::string p = "pixel_decoder.enc" + std::to_string(i);
        Layer l;
        l.ln1 = make_layer_norm(ps, p + ".ln1", d);
        l.attn = make_deform_attn(ps, p + ".attn", d, d, heads, points, 3);
        l.ln2 = make_layer_norm(ps, p + ".ln2", d);
        l.ffn = make_mlp(ps, p + ".ffn", d, 2 * d, d);
        layers_.push_back(std::move(l));
    }
}

PixelDecoder::Refined PixelDecoder::apply(const Pyramid& assembled) const {
    if (assembled.count() != 4)
        throw std::invalid_argument("PixelDecoder: expected a 4-level pyramid");
    std::vector<LevelSpec> specs = {assembled.levels[1], assembled.levels[2],
                                    assembled.levels[3]};
    Tensor x = slice(assembled.tokens, 0, assembled.offsets[1],
                     assembled.offsets[4] - assembled.offsets[1]);
    Tensor refs = grid_reference_points(specs);
    std::vector<long> offs = {0, specs[0].count(), specs[0].count() + specs[1].count(),
                              specs[0].count() + specs[1].count() + specs[2].count()};

    for (const Layer& l : layers_) {
        Tensor y = l.ln1.apply(x);
        Pyramid v;
        v.tokens = y;
        v.levels = specs;
        v.offsets = offs;
        x = add(x, l.attn.apply(y, refs, v));
        x = add(x, l.ffn.apply(l.ln2.apply(x)));
    }

    Refined out;
    out.levels.tokens = x;
    out.levels.levels = specs;
    out.levels.offsets = offs;

    Tensor quarter = assembled.level_plane(0);  // [d, H4, W4]
    Tensor eighth = out.levels.level_plane(0);
    out.pixel_embed = add(quarter, resize_bilinear(eighth, quarter.dim(1), quarter.dim(2)));
    return out;
}

Tensor mask_to_attention(const Tensor& mask_logits, long lh, long lw) {
    if (!mask_logits.defined() || mask_logits.rank() != 3 || mask_logits.dim(0) != 2)
        throw std::invalid_argument("mask_to_attention: expected [2,h,w] logits");
    Tensor prob;
    {
        NoGrad ng;
        prob = resize_bilinear(sigmoid(mask_logits), lh, lw);
    }
    const double ninf = -std::numeric_limits<double>::infinity();
    Tensor m = make_tensor({2, lh * lw}, DType::F64);
    for (long i = 0; i < 2 * lh * lw; ++i)
        m.raw()[i] = prob.values()[i] > 0.5 ? 0.0 : ninf;
    return m;
}

GroundDecoder::GroundDecoder(ParamStore& ps, long c, long heads, long l_dec)
    : c_(c), l_dec_(l_dec) {
    x0_ = ps.get("ground_decoder.x0", {2, c}, Init::Normal02);
    eq_ = ps.get("ground_decoder.eq", {2, c}, Init::Normal02);
    for (long l = 0; l < l_dec; ++l) {
        std::string p = "ground_decoder.lay" + std::to_string(l);
        Layer lay;
        lay.ln1 = make_layer_norm(ps, p + ".ln1", c);
        lay.self = make_mha(ps, p + ".self", c, heads);
        lay.ln2 = make_layer_norm(ps, p + ".ln2", c);
        lay.ffn = make_mlp(ps, p + ".ffn", c, 2 * c, c);
        layers_.push_back(std::move(lay));
    }
    mask_mlp_ = make_mlp(ps, "heads.mask", c, c, c);
    cls_mlp_ = make_mlp(ps, "heads.cls", c, c, 2);
    box_mlp_ = make_mlp(ps, "heads.bbox", c, c, 4);
}

Prediction GroundDecoder::predict(const Tensor& x, const Tensor& pix_tokens, long h4,
                                  long w4) const {
    Prediction p;
    Tensor emb = mask_mlp_.apply(x);                       // [2, C]
    p.mask_logits = reshape(matmul(emb, transpose(pix_tokens)), {2, h4, w4});
    p.class_logits = cls_mlp_.apply(x);
    p.boxes = sigmoid(box_mlp_.apply(x));
    return p;
}

std::vector<Prediction> GroundDecoder::forward(const PixelDecoder::Refined& in,
                                               const Tensor& m0) const {
    long h4 = in.pixel_embed.dim(1), w4 = in.pixel_embed.dim(2);
    Tensor pix_tokens =
        transpose(reshape(in.pixel_embed, {in.pixel_embed.dim(0), h4 * w4}));  // [N4, d]

    // K/V level cycle: deepest (1/32) first
    auto level_of = [&](long layer) { return 2 - (layer % 3); };
    if (!m0.defined() || m0.rank() != 2 || m0.dim(0) != 2 ||
        m0.dim(1) != in.levels.levels[level_of(0)].count())
        throw std::invalid_argument("GroundDecoder: m0 must be [2, first-level tokens]");

    std::vector<Prediction> preds;
    preds.push_back(predict(x0_, pix_tokens, h4, w4));

    Tensor x = x0_;
    Tensor m = m0;
    Tensor inv_sqrt_c = Tensor::scalar(1.0 / std::sqrt(static_cast<double>(c_)));
    for (long l = 0; l < l_dec_; ++l) {
        Tensor kv = in.levels.level(level_of(l));  // [N_l, C]
        // masked cross-attention, exactly the update equation
        Tensor gq = add(x, eq_);
        Tensor scores = mul(matmul(gq, transpose(kv)), inv_sqrt_c);
        Tensor att = softmax_masked(scores, m);
        x = add(matmul(att, kv), x);
        // self-attention over the two queries, then the feed-forward block
        const Layer& lay = layers_[l];
        Tensor y = lay.ln1.apply(x);
        Tensor qk = add(y, eq_);
        x = add(x, lay.self.apply(qk, qk, y));
        x = add(x, lay.ffn.apply(lay.ln2.apply(x)));

        preds.push_back(predict(x, pix_tokens, h4, w4));
        if (l + 1 < l_dec_) {
            const LevelSpec& nxt = in.levels.levels[level_of(l + 1)];
            m = mask_to_attention(preds.back().mask_logits, nxt.h, nxt.w);
        }
    }
    return preds;
}

}  // namespace focus
