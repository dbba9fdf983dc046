#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "focus/checkpoint.hpp"
#include "focus/criterion.hpp"
#include "focus/data_synth.hpp"
#include "focus/model.hpp"
#include "focus/optim.hpp"
#include "test_util.hpp"

using namespace focus;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_config() {
    RunConfig c;
    c.seed = 5;
    c.image_size = 64;
    c.c = c.d = c.cb = 16;
    c.s = 8;
    c.l_dec = 2;
    c.n_enc = 1;
    c.heads = 2;
    c.points = 2;
    c.backbone_blocks = 4;
    c.backbone_heads = 2;
    c.clip_image_size = 32;
    c.lr = 1e-3;
    c.grad_clip = 1.0;
    return c;
}

bool params_equal(const ParamStore& a, const ParamStore& b) {
    if (a.all().size() != b.all().size()) return false;
    for (const auto& [name, t] : a.all()) {
        auto it = b.all().find(name);
        if (it == b.all().end() || it->second.shape() != t.shape()) return false;
        for (long i = 0; i < t.numel(); ++i)
            if (t.values()[i] != it->second.values()[i]) return false;
    }
    return true;
}

// one weighted-criterion training step, mirroring the train loop
double train_step(FocusModel& model, ParamStore& ps, AdamW& opt, const Scene& scene,
                  const RunConfig& cfg) {
    for (const auto& [name, t] : ps.all()) const_cast<Tensor&>(t).zero_grad();
    Tape tape;
    ModelOutput out = model.forward(scene.image);
    Targets tg = build_targets(scene.mask, cfg.image_size / 4, cfg.image_size / 4);
    LossWeights w{cfg.lambda_clip, cfg.lambda_label, cfg.lambda_mask, cfg.lambda_bbox};
    LossBreakdown lb =
        total_loss(out.preds, tg, w, cfg.deep_supervision, model.refiner(), out.input);
    tape.backward(lb.total);
    opt.clip_gradients();
    opt.step();
    return lb.total.item();
}

}  // namespace

TEST_CASE("full forward produces well-formed predictions at every layer") {
    RunConfig cfg = tiny_config();
    ParamStore ps(cfg.seed);
    FocusModel model(ps, cfg);
    SynthOptions sopt;
    sopt.size = 80;  // off-size input exercises the resize path
    Scene scene = gen_scene(7, 0, sopt);
    ModelOutput out = model.forward(scene.image);

    REQUIRE(static_cast<long>(out.preds.size()) == cfg.l_dec + 1);
    for (const Prediction& p : out.preds) {
        CHECK(p.mask_logits.shape() == Shape{2, 16, 16});
        CHECK(p.class_logits.shape() == Shape{2, 2});
        CHECK(p.boxes.shape() == Shape{2, 4});
        for (double v : p.boxes.values()) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        for (double v : p.mask_logits.values()) CHECK(std::isfinite(v));
    }
    CHECK(out.input.shape() == Shape{3, 64, 64});
    CHECK(out.edge_overlay.shape() == Shape{3, 64, 64});
    // 2x2 token grid at 1/32: two complementary 4-entry rows
    REQUIRE(out.ground_mask.m0.shape() == Shape{2, 4});
    for (long j = 0; j < 4; ++j) {
        double a = out.ground_mask.m0.at({0, j}), b = out.ground_mask.m0.at({1, j});
        CHECK(((a == 0.0) != (b == 0.0)));
    }
    CHECK(out.ground_mask.fg.shape() == Shape{2, 2});
}

TEST_CASE("model rejects mismatched decoder and pyramid widths") {
    RunConfig cfg = tiny_config();
    cfg.d = 32;  // decoder reads pixel embeddings directly: widths must agree
    ParamStore ps(cfg.seed);
    CHECK_THROWS_AS(FocusModel(ps, cfg), std::invalid_argument);
}

TEST_CASE("a training step is a pure function of seed and data") {
    RunConfig cfg = tiny_config();
    SynthOptions sopt;
    sopt.size = 64;
    Scene scene = gen_scene(7, 1, sopt);

    ParamStore ps1(cfg.seed);
    FocusModel m1(ps1, cfg);
    AdamW o1(ps1, cfg.lr, cfg.weight_decay, cfg.grad_clip);
    double l1 = train_step(m1, ps1, o1, scene, cfg);

    ParamStore ps2(cfg.seed);
    FocusModel m2(ps2, cfg);
    AdamW o2(ps2, cfg.lr, cfg.weight_decay, cfg.grad_clip);
    double l2 = train_step(m2, ps2, o2, scene, cfg);

    CHECK(l1 == l2);
    CHECK(params_equal(ps1, ps2));
    CHECK(std::isfinite(l1));

    // a different scene moves the parameters
    Scene other = gen_scene(7, 2, sopt);
    train_step(m1, ps1, o1, other, cfg);
    train_step(m2, ps2, o2, scene, cfg);
    CHECK(!params_equal(ps1, ps2));
}

TEST_CASE("frozen contrastive towers never move during training") {
    RunConfig cfg = tiny_config();
    SynthOptions sopt;
    sopt.size = 64;
    Scene scene = gen_scene(7, 3, sopt);
    ParamStore ps(cfg.seed);
    FocusModel model(ps, cfg);
    std::map<std::string, std::vector<double>> before;
    for (const auto& [name, t] : ps.all())
        if (!t.requires_grad()) before[name] = t.values();
    CHECK(!before.empty());
    AdamW opt(ps, cfg.lr, cfg.weight_decay, cfg.grad_clip);
    train_step(model, ps, opt, scene, cfg);
    for (const auto& [name, vals] : before) CHECK(ps.all().at(name).values() == vals);
}

TEST_CASE("checkpoint round trip restores training bit-exactly") {
    RunConfig cfg = tiny_config();
    SynthOptions sopt;
    sopt.size = 64;
    Scene s0 = gen_scene(7, 4, sopt), s1 = gen_scene(7, 5, sopt);

    ParamStore ps1(cfg.seed);
    FocusModel m1(ps1, cfg);
    AdamW o1(ps1, cfg.lr, cfg.weight_decay, cfg.grad_clip);
    train_step(m1, ps1, o1, s0, cfg);

    fs::path path = fs::temp_directory_path() / "focus_ckpt_rt.bin";
    CheckpointMeta meta;
    meta.step = 1;
    meta.config_text = config_to_text(cfg);
    save_checkpoint(path.string(), ps1, &o1, meta);
    CHECK(!fs::exists(path.string() + ".tmp"));

    LoadedCheckpoint lc = load_checkpoint(path.string());
    CHECK(lc.meta.schema_version == 1);
    CHECK(lc.meta.step == 1);
    RunConfig cfg2 = parse_config_text(lc.meta.config_text);
    CHECK(config_to_text(cfg2) == config_to_text(cfg));

    ParamStore ps2(cfg.seed + 99);  // different init; restore must overwrite all of it
    FocusModel m2(ps2, cfg2);
    restore_params(ps2, lc.archive);
    CHECK(params_equal(ps1, ps2));
    AdamW o2(ps2, cfg2.lr, cfg2.weight_decay, cfg2.grad_clip);
    o2.load(lc.archive);
    CHECK(o2.t() == o1.t());

    // identical continuation from the restored state
    double la = train_step(m1, ps1, o1, s1, cfg);
    double lb = train_step(m2, ps2, o2, s1, cfg2);
    CHECK(la == lb);
    CHECK(params_equal(ps1, ps2));
    fs::remove(path);
}

TEST_CASE("restore rejects missing parameters but ignores extras") {
    ParamStore ps(3);
    ps.get("a.w", {4}, Init::Xavier);
    ps.get("a.b", {4}, Init::Zeros);
    Archive ar;
    for (const auto& [name, t] : ps.all()) ar.tensors[name] = t.clone();
    ar.tensors["stale.extra"] = Tensor::zeros({2});
    restore_params(ps, ar);  // extras are fine

    ar.tensors.erase("a.b");
    CHECK_THROWS_AS(restore_params(ps, ar), std::runtime_error);

    ar.tensors["a.b"] = Tensor::zeros({5});  // wrong shape
    CHECK_THROWS_AS(restore_params(ps, ar), std::runtime_error);
}

TEST_CASE("adamw matches the hand-computed update") {
    ParamStore ps(1);
    Tensor w = ps.get("w", {3}, Init::Zeros);
    w.raw() = {1.0, -2.0, 0.5};
    std::vector<double> g = {0.3, -0.1, 0.0};
    const double lr = 0.01, wd = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;

    std::vector<double> expect = w.values(), m(3, 0.0), v(3, 0.0);
    AdamW opt(ps, lr, wd, 0.0);
    for (long t = 1; t <= 3; ++t) {
        w.zero_grad();
        {
            Tape tape;
            tape.backward(sum(mul(w, Tensor::from({3}, g))));
        }
        opt.step();
        for (int i = 0; i < 3; ++i) {
            m[i] = b1 * m[i] + (1 - b1) * g[i];
            v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
            double mh = m[i] / (1 - std::pow(b1, t)), vh = v[i] / (1 - std::pow(b2, t));
            expect[i] -= lr * (mh / (std::sqrt(vh) + eps) + wd * expect[i]);
        }
        for (int i = 0; i < 3; ++i)
            CHECK(w.values()[i] == doctest::Approx(expect[i]).epsilon(1e-15));
    }
    CHECK(opt.t() == 3);
}

TEST_CASE("gradient clipping rescales to the max norm and reports the raw norm") {
    ParamStore ps(2);
    Tensor a = ps.get("a", {1}, Init::Zeros);
    Tensor b = ps.get("b", {1}, Init::Zeros);
    a.ensure_grad()[0] = 3.0;
    b.ensure_grad()[0] = 4.0;
    AdamW opt(ps, 0.1, 0.0, 1.0);
    CHECK(opt.clip_gradients() == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(a.grad()[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(b.grad()[0] == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(opt.clip_gradients() == doctest::Approx(1.0).epsilon(1e-12));

    // disabled clip: norm reported, gradients untouched
    a.ensure_grad()[0] = 3.0;
    b.ensure_grad()[0] = 4.0;
    AdamW open(ps, 0.1, 0.0, 0.0);
    CHECK(open.clip_gradients() == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(a.grad()[0] == 3.0);

    // a parameter without a gradient decays toward zero but sees no moment
    Tensor c = ps.get("c", {1}, Init::Zeros);
    c.raw() = {2.0};
    AdamW wd_only(ps, 0.5, 0.1, 0.0);
    a.zero_grad();
    b.zero_grad();
    wd_only.step();
    CHECK(c.values()[0] == doctest::Approx(2.0 - 0.5 * 0.1 * 2.0).epsilon(1e-15));
}

TEST_CASE("optimizer state survives the archive round trip") {
    ParamStore ps(4);
    Tensor w = ps.get("w", {2}, Init::Zeros);
    w.raw() = {0.5, -0.5};
    AdamW opt(ps, 0.01, 0.0, 0.0);
    for (int t = 0; t < 2; ++t) {
        w.zero_grad();
        Tape tape;
        tape.backward(sum(mul(w, w)));
        opt.step();
    }
    Archive ar;
    opt.save(ar);
    CHECK(ar.tensors.count("optimizer.m.w") == 1);
    CHECK(ar.tensors.count("optimizer.t") == 1);

    ParamStore ps2(4);
    Tensor w2 = ps2.get("w", {2}, Init::Zeros);
    w2.raw() = w.values();
    AdamW opt2(ps2, 0.01, 0.0, 0.0);
    opt2.load(ar);
    CHECK(opt2.t() == 2);

    // both continue identically
    auto advance = [](Tensor& t, AdamW& o) {
        t.zero_grad();
        Tape tape;
        tape.backward(sum(mul(t, t)));
        o.step();
    };
    advance(w, opt);
    advance(w2, opt2);
    CHECK(w.values() == w2.values());

    Archive empty;
    CHECK_THROWS_AS(opt2.load(empty), std::runtime_error);
}
