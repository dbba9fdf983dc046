#include <doctest.h>

#include <cmath>

#include "focus/edge_enhancer.hpp"
#include "test_util.hpp"

using namespace focus;
using focus::testutil::randt;

namespace {

Pyramid random_pyramid(Rng& rng, long d, const std::vector<LevelSpec>& specs) {
    std::vector<Tensor> toks;
    for (const LevelSpec& s : specs) toks.push_back(randt({s.count(), d}, rng));
    return make_pyramid(toks, specs);
}

}  // namespace

TEST_CASE("pyramid level slicing restores the 2-D planes") {
    Rng rng(4);
    std::vector<LevelSpec> specs = {{4, 6}, {2, 3}};
    Pyramid p = random_pyramid(rng, 5, specs);
    CHECK(p.tokens.dim(0) == 24 + 6);
    Tensor plane = p.level_plane(1);  // [5,2,3]
    for (long c = 0; c < 5; ++c)
        for (long y = 0; y < 2; ++y)
            for (long x = 0; x < 3; ++x)
                CHECK(plane.at({c, y, x}) == p.tokens.at({24 + y * 3 + x, c}));
}

TEST_CASE("reference points are pixel centers in [0,1]") {
    Tensor refs = grid_reference_points({{2, 4}});
    CHECK(refs.dim(0) == 8);
    CHECK(refs.at({0, 0}) == doctest::Approx(0.125).epsilon(1e-15));  // x of col 0
    CHECK(refs.at({0, 1}) == doctest::Approx(0.25).epsilon(1e-15));   // y of row 0
    CHECK(refs.at({7, 0}) == doctest::Approx(0.875).epsilon(1e-15));
    CHECK(refs.at({7, 1}) == doctest::Approx(0.75).epsilon(1e-15));
}

TEST_CASE("deformable attention at zero init averages the reference samples") {
    // offsets and mixing logits start at zero: every head samples each level
    // at the query's reference point and mixes with uniform weights, so the
    // output is out_fc(mean over levels of the sampled value features).
    Rng rng(11);
    ParamStore ps(8);
    long d = 8;
    DeformAttn attn = make_deform_attn(ps, "t.attn", d, d, 2, 3, 2);
    std::vector<LevelSpec> specs = {{4, 4}, {2, 2}};
    Pyramid vals = random_pyramid(rng, d, specs);
    Tensor queries = randt({4, d}, rng);
    // queries sit exactly on value pixel centers of level 1 (2x2)
    Tensor refs = grid_reference_points({{2, 2}});
    Tensor out = attn.apply(queries, refs, vals);
    REQUIRE(out.dim(0) == 4);
    REQUIRE(out.dim(1) == d);

    // expected: per query, average of the two levels' bilinear samples at
    // the reference, pushed through value_fc then out_fc
    Tensor v = attn.value_fc.apply(vals.tokens);
    for (long q = 0; q < 4; ++q) {
        std::vector<double> mixed(d, 0.0);
        // level 1 sample is exact (on-center): token row 16+q
        // level 0 sample: bilinear at (x,y) in a 4x4 grid
        double fx = refs.at({q, 0}) * 4 - 0.5, fy = refs.at({q, 1}) * 4 - 0.5;
        long x0 = static_cast<long>(std::floor(fx)), y0 = static_cast<long>(std::floor(fy));
        double tx = fx - x0, ty = fy - y0;
        for (long c = 0; c < d; ++c) {
            auto at0 = [&](long yy, long xx) {
                yy = std::min(std::max(yy, 0L), 3L);
                xx = std::min(std::max(xx, 0L), 3L);
                return v.at({yy * 4 + xx, c});
            };
            double s0 = (1 - ty) * ((1 - tx) * at0(y0, x0) + tx * at0(y0, x0 + 1)) +
                        ty * ((1 - tx) * at0(y0 + 1, x0) + tx * at0(y0 + 1, x0 + 1));
            double s1 = v.at({16 + q, c});
            mixed[c] = 0.5 * (s0 + s1);
        }
        Tensor m = Tensor::from({1, d}, mixed);
        Tensor want = attn.out_fc.apply(m);
        for (long c = 0; c < d; ++c)
            CHECK(out.at({q, c}) == doctest::Approx(want.at({0, c})).epsilon(1e-12));
    }
}

TEST_CASE("deformable mixing weights sum to one per head") {
    Rng rng(13);
    ParamStore ps(9);
    DeformAttn attn = make_deform_attn(ps, "t.attn2", 8, 8, 2, 4, 2);
    // make the weight predictor non-trivial
    for (double& v : attn.weight_fc.w.raw()) v = rng.uniform(-0.5, 0.5);
    std::vector<LevelSpec> specs = {{3, 3}, {2, 2}};
    Pyramid vals = random_pyramid(rng, 8, specs);
    Tensor queries = randt({5, 8}, rng);
    Tensor refs = randt({5, 2}, rng, 0.1, 0.9);
    // cross-check: replace the values by all-ones features; then regardless
    // of where samples land (border clamp included), each head mixes ones
    // with weights summing to 1, so out_fc input is exactly ones
    Tensor ones = Tensor::full({13, 8}, 1.0);
    Pyramid pv = make_pyramid({slice(ones, 0, 0, 9), slice(ones, 0, 9, 4)}, specs);
    DeformAttn id = attn;
    id.value_fc.w = Tensor::zeros({8, 8});
    for (long i = 0; i < 8; ++i) id.value_fc.w.raw()[i * 8 + i] = 1.0;
    id.value_fc.b = Tensor::zeros({8});
    id.out_fc.w = id.value_fc.w;
    id.out_fc.b = Tensor::zeros({8});
    Tensor out = id.apply(queries, refs, pv);
    for (double v : out.values()) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("edge net emits the stem and a 3-level pyramid at the right scales") {
    ParamStore ps(17);
    EdgeNet net(ps, 16);
    Rng rng(3);
    Tensor img = randt({3, 64, 96}, rng, 0.0, 1.0);
    EdgeFeatures ef = net.forward(img);
    CHECK(ef.stem.dim(0) == 16);
    CHECK(ef.stem.dim(1) == 16);
    CHECK(ef.stem.dim(2) == 24);
    REQUIRE(ef.pyramid.count() == 3);
    CHECK(ef.pyramid.levels[0].h == 8);
    CHECK(ef.pyramid.levels[0].w == 12);
    CHECK(ef.pyramid.levels[1].h == 4);
    CHECK(ef.pyramid.levels[2].h == 2);
    CHECK(ef.pyramid.tokens.dim(1) == 16);
}

TEST_CASE("injector with zero gate is an exact identity") {
    Rng rng(31);
    ParamStore ps(23);
    long cb = 12, d = 8;
    Injector inj;
    inj.ln_q = make_layer_norm(ps, "t.inj.ln_q", cb);
    inj.ln_v = make_layer_norm(ps, "t.inj.ln_v", d);
    inj.attn = make_deform_attn(ps, "t.inj.attn", cb, d, 2, 3, 2);
    // randomize the attention so only the gate can keep identity
    for (double& v : inj.attn.offset_fc.w.raw()) v = rng.uniform(-0.3, 0.3);
    for (double& v : inj.attn.weight_fc.w.raw()) v = rng.uniform(-0.3, 0.3);
    inj.gamma = Tensor::zeros({cb});

    std::vector<LevelSpec> specs = {{4, 4}, {2, 2}};
    Pyramid edge = random_pyramid(rng, d, specs);
    Tensor tap = randt({9, cb}, rng);
    Tensor refs = grid_reference_points({{3, 3}});
    Tensor out = inj.apply(tap, refs, edge);
    REQUIRE(out.shape() == tap.shape());
    for (long i = 0; i < tap.numel(); ++i) CHECK(out.values()[i] == tap.values()[i]);
}

TEST_CASE("a non-zero gate actually changes the tap") {
    Rng rng(32);
    ParamStore ps(24);
    long cb = 12, d = 8;
    Injector inj;
    inj.ln_q = make_layer_norm(ps, "t.inj2.ln_q", cb);
    inj.ln_v = make_layer_norm(ps, "t.inj2.ln_v", d);
    inj.attn = make_deform_attn(ps, "t.inj2.attn", cb, d, 2, 3, 2);
    inj.gamma = Tensor::full({cb}, 0.5);
    std::vector<LevelSpec> specs = {{4, 4}, {2, 2}};
    Pyramid edge = random_pyramid(rng, d, specs);
    Tensor tap = randt({9, cb}, rng);
    Tensor refs = grid_reference_points({{3, 3}});
    Tensor out = inj.apply(tap, refs, edge);
    double diff = 0.0;
    for (long i = 0; i < tap.numel(); ++i) diff += std::fabs(out.values()[i] - tap.values()[i]);
    CHECK(diff > 1e-6);
}
