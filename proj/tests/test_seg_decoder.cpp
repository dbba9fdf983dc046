#include <doctest.h>

#include <cmath>

#include "focus/seg_decoder.hpp"
#include "test_util.hpp"

using namespace focus;
using focus::testutil::randt;

namespace {

// 4-level pyramid shaped like a 64x64 input: 16x16, 8x8, 4x4, 2x2
Pyramid tiny_assembled(Rng& rng, long d) {
    std::vector<LevelSpec> specs = {{16, 16}, {8, 8}, {4, 4}, {2, 2}};
    std::vector<Tensor> toks;
    for (const LevelSpec& s : specs) toks.push_back(randt({s.count(), d}, rng));
    return make_pyramid(toks, specs);
}

void zero_param(ParamStore& ps, const std::string& name) {
    REQUIRE(ps.has(name));
    for (auto& [n, t] : ps.all())
        if (n == name)
            for (double& v : const_cast<Tensor&>(t).raw()) v = 0.0;
}

PixelDecoder::Refined refined_from(const Pyramid& assembled) {
    ParamStore tmp(0);
    PixelDecoder pd(tmp, assembled.tokens.dim(1), 2, 2, 0);  // passthrough
    return pd.apply(assembled);
}

}  // namespace

TEST_CASE("mask_to_attention thresholds strictly above one half") {
    Tensor logits = Tensor::zeros({2, 2, 2});
    logits.raw() = {2.0, -2.0, 0.0, 1e-9,      // query 0
                    -1.0, 3.0, -1e-9, 0.5};    // query 1
    Tensor m = mask_to_attention(logits, 2, 2);
    CHECK(m.at({0, 0}) == 0.0);                 // sigmoid(2) > 0.5
    CHECK(std::isinf(m.at({0, 1})));            // sigmoid(-2) < 0.5
    CHECK(std::isinf(m.at({0, 2})));            // logit 0 -> exactly 0.5 -> hidden
    CHECK(m.at({0, 3}) == 0.0);                 // barely positive -> visible
    CHECK(std::isinf(m.at({1, 0})));
    CHECK(m.at({1, 1}) == 0.0);
    CHECK(std::isinf(m.at({1, 2})));
    CHECK(m.at({1, 3}) == 0.0);
}

TEST_CASE("mask_to_attention output is a constant even under a tape") {
    Rng rng(5);
    Tape tape;
    Tensor logits = randt({2, 3, 3}, rng);
    logits.set_requires_grad(true);
    Tensor m = mask_to_attention(logits, 6, 6);
    CHECK(!m.requires_grad());
}

TEST_CASE("pixel decoder with no layers passes tokens through untouched") {
    Rng rng(41);
    ParamStore ps(7);
    long d = 8;
    Pyramid assembled = tiny_assembled(rng, d);
    PixelDecoder pd(ps, d, 2, 2, 0);
    PixelDecoder::Refined r = pd.apply(assembled);
    // levels 1..3 bit-identical
    Tensor want = slice(assembled.tokens, 0, 256, 84);
    REQUIRE(r.levels.tokens.numel() == want.numel());
    for (long i = 0; i < want.numel(); ++i)
        CHECK(r.levels.tokens.values()[i] == want.values()[i]);
    // pixel embedding = 1/4 plane + bilinear(1/8 plane), no projection
    Tensor quarter = assembled.level_plane(0);
    Tensor eighth = resize_bilinear(assembled.level_plane(1), 16, 16);
    for (long i = 0; i < quarter.numel(); ++i)
        CHECK(r.pixel_embed.values()[i] ==
              doctest::Approx(quarter.values()[i] + eighth.values()[i]).epsilon(1e-15));
}

TEST_CASE("pixel decoder layers keep shapes and change values") {
    Rng rng(43);
    ParamStore ps(11);
    long d = 8;
    Pyramid assembled = tiny_assembled(rng, d);
    PixelDecoder pd(ps, d, 2, 2, 2);
    PixelDecoder::Refined r = pd.apply(assembled);
    CHECK(r.levels.tokens.dim(0) == 84);
    CHECK(r.pixel_embed.dim(0) == d);
    CHECK(r.pixel_embed.dim(1) == 16);
    CHECK(r.pixel_embed.dim(2) == 16);
}

TEST_CASE("decoder layer collapses to identity when its branches vanish") {
    // zero the level tokens (so cross-attention adds 0), the self-attention
    // output projection and the FFN second linear: X_1 must equal X_0
    // bit-exactly, hence layer-1 predictions equal layer-0 predictions.
    Rng rng(47);
    ParamStore ps(13);
    long d = 8;
    GroundDecoder gd(ps, d, 2, 1);
    zero_param(ps, "ground_decoder.lay0.self.o.w");
    zero_param(ps, "ground_decoder.lay0.ffn.fc2.w");

    Pyramid assembled = tiny_assembled(rng, d);
    for (long i = 256 * d; i < assembled.tokens.numel(); ++i) assembled.tokens.raw()[i] = 0.0;
    PixelDecoder::Refined r = refined_from(assembled);

    Tensor m0 = Tensor::zeros({2, 4});  // all-visible at the 2x2 deepest grid
    std::vector<Prediction> preds = gd.forward(r, m0);
    REQUIRE(preds.size() == 2);
    for (long i = 0; i < preds[0].class_logits.numel(); ++i)
        CHECK(preds[1].class_logits.values()[i] == preds[0].class_logits.values()[i]);
    for (long i = 0; i < preds[0].mask_logits.numel(); ++i)
        CHECK(preds[1].mask_logits.values()[i] == preds[0].mask_logits.values()[i]);
    for (long i = 0; i < preds[0].boxes.numel(); ++i)
        CHECK(preds[1].boxes.values()[i] == preds[0].boxes.values()[i]);
}

TEST_CASE("a single visible cell pins cross-attention to that token") {
    // two pyramids differing everywhere on the deepest level except the one
    // visible cell produce identical predictions
    Rng rng(53);
    ParamStore ps(17);
    long d = 8;
    GroundDecoder gd(ps, d, 2, 1);

    Pyramid a = tiny_assembled(rng, d);
    Pyramid b = tiny_assembled(rng, d);
    // same tokens except the deepest level; in the deepest level only cell 3
    // (visible below) matches
    for (long i = 0; i < 340 * d; ++i) b.tokens.raw()[i] = a.tokens.values()[i];
    for (long i = 336 * d; i < 340 * d; ++i) b.tokens.raw()[i] = rng.uniform(-1, 1);
    for (long c = 0; c < d; ++c)
        b.tokens.raw()[(336 + 3) * d + c] = a.tokens.values()[(336 + 3) * d + c];

    const double ninf = -std::numeric_limits<double>::infinity();
    Tensor m0 = Tensor::full({2, 4}, ninf);
    m0.raw()[3] = 0.0;      // query 0 sees only cell 3
    m0.raw()[4 + 3] = 0.0;  // query 1 sees only cell 3

    std::vector<Prediction> pa = gd.forward(refined_from(a), m0);
    std::vector<Prediction> pb = gd.forward(refined_from(b), m0);
    for (long i = 0; i < pa[1].mask_logits.numel(); ++i)
        CHECK(pa[1].mask_logits.values()[i] == pb[1].mask_logits.values()[i]);
    for (long i = 0; i < 4; ++i)
        CHECK(pa[1].class_logits.values()[i] == pb[1].class_logits.values()[i]);

    // sensitivity: moving the visible cell changes the result
    Tensor m0_other = Tensor::full({2, 4}, ninf);
    m0_other.raw()[1] = 0.0;
    m0_other.raw()[4 + 1] = 0.0;
    std::vector<Prediction> pc = gd.forward(refined_from(a), m0_other);
    double diff = 0.0;
    for (long i = 0; i < 4; ++i)
        diff += std::fabs(pc[1].class_logits.values()[i] - pa[1].class_logits.values()[i]);
    CHECK(diff > 1e-9);
}

TEST_CASE("prediction outputs are well-formed") {
    Rng rng(59);
    ParamStore ps(19);
    long d = 8;
    GroundDecoder gd(ps, d, 2, 3);
    Pyramid assembled = tiny_assembled(rng, d);
    PixelDecoder::Refined r = refined_from(assembled);
    Tensor m0 = Tensor::zeros({2, 4});
    std::vector<Prediction> preds = gd.forward(r, m0);
    REQUIRE(preds.size() == 4);  // initial queries + 3 layers
    for (const Prediction& p : preds) {
        CHECK(p.mask_logits.shape() == Shape{2, 16, 16});
        CHECK(p.class_logits.shape() == Shape{2, 2});
        CHECK(p.boxes.shape() == Shape{2, 4});
        for (double v : p.boxes.values()) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
    // m0 row length must match the deepest level
    CHECK_THROWS(gd.forward(r, Tensor::zeros({2, 16})));
}
