#include <doctest.h>

#include <cmath>

#include "focus/clip_refiner.hpp"
#include "test_util.hpp"

using namespace focus;
using focus::testutil::randt;

namespace {

ClipRefiner make_refiner(ParamStore& ps, double tau = 0.07) {
    return ClipRefiner(ps, 16, 16, tau, "bright object in front", "dull scenery behind");
}

}  // namespace

TEST_CASE("construction rejects bad temperature and colliding prompts") {
    ParamStore ps(2);
    CHECK_THROWS_AS(make_refiner(ps, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(make_refiner(ps, -1.0), std::invalid_argument);
    ParamStore ps2(3);
    CHECK_THROWS_AS(ClipRefiner(ps2, 16, 16, 0.07, "same words", "same words"),
                    std::invalid_argument);
    ParamStore ps3(4);
    make_refiner(ps3);  // fine
}

TEST_CASE("prompt encodings are unit length and deterministic") {
    ParamStore ps(5);
    ClipRefiner r = make_refiner(ps);
    Tensor t1 = r.encode_text("a few plain words");
    Tensor t2 = r.encode_text("a few plain words");
    double n = 0.0;
    for (long i = 0; i < t1.numel(); ++i) {
        n += t1.values()[i] * t1.values()[i];
        CHECK(t1.values()[i] == t2.values()[i]);
    }
    CHECK(n == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("equal masks floor the loss at ln 2") {
    // identical fg/bg masks make both fused images equal, so the two
    // text-side terms are softplus(0) = ln 2 and the image-side pair is
    // sp(d) + sp(-d) >= 2 ln 2: the total can never drop below ln 2
    ParamStore ps(6);
    ClipRefiner r = make_refiner(ps);
    Rng rng(31);
    Tensor img = randt({3, 16, 16}, rng, 0.0, 1.0);
    Tensor logits = randt({8, 8}, rng);
    Tensor loss = r.loss(img, logits, logits);
    CHECK(loss.item() >= std::log(2.0) - 1e-12);
}

TEST_CASE("perfectly matched +-1 similarities hit the closed form") {
    for (double tau : {1.0, 0.5, 0.07}) {
        Tensor loss =
            contrastive_pair_loss(Tensor::scalar(1.0), Tensor::scalar(-1.0),
                                  Tensor::scalar(-1.0), Tensor::scalar(1.0), tau);
        double want = std::log(1.0 + std::exp(-2.0 / tau));
        CHECK(loss.item() == doctest::Approx(want).epsilon(1e-12));
    }
    // and all-equal similarities give ln 2 for any tau
    for (double tau : {1.0, 0.07}) {
        Tensor loss = contrastive_pair_loss(Tensor::scalar(0.3), Tensor::scalar(0.3),
                                            Tensor::scalar(0.3), Tensor::scalar(0.3), tau);
        CHECK(loss.item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }
    CHECK_THROWS_AS(contrastive_pair_loss(Tensor::scalar(0), Tensor::scalar(0),
                                          Tensor::scalar(0), Tensor::scalar(0), 0.0),
                    std::invalid_argument);
}

TEST_CASE("loss gradient reaches the mask logits") {
    ParamStore ps(7);
    ClipRefiner r = make_refiner(ps);
    Rng rng(37);
    Tensor img = randt({3, 16, 16}, rng, 0.0, 1.0);
    Tensor fg = randt({8, 8}, rng);
    Tensor bg = randt({8, 8}, rng);
    fg.set_requires_grad(true);
    bg.set_requires_grad(true);

    Tape tape;
    Tensor loss = r.loss(img, fg, bg);
    tape.backward(loss);
    REQUIRE(fg.has_grad());
    REQUIRE(bg.has_grad());
    double gsum = 0.0;
    for (double g : fg.grad()) gsum += std::fabs(g);
    CHECK(gsum > 1e-12);

    // finite-difference check on a handful of coordinates
    double base = loss.item();
    (void)base;
    for (long idx : {0L, 13L, 37L, 63L}) {
        double h = 1e-6;
        Tensor fg2 = fg.clone();
        fg2.raw()[idx] += h;
        Tensor plus = r.loss(img, fg2, bg);
        fg2.raw()[idx] -= 2 * h;
        Tensor minus = r.loss(img, fg2, bg);
        double fd = (plus.item() - minus.item()) / (2 * h);
        CHECK(fg.grad()[idx] == doctest::Approx(fd).epsilon(1e-4));
    }
}

TEST_CASE("frozen towers accumulate no gradient") {
    ParamStore ps(8);
    ClipRefiner r = make_refiner(ps);
    Rng rng(41);
    Tensor img = randt({3, 16, 16}, rng, 0.0, 1.0);
    Tensor fg = randt({8, 8}, rng);
    Tensor bg = randt({8, 8}, rng);
    fg.set_requires_grad(true);

    Tape tape;
    Tensor loss = r.loss(img, fg, bg);
    tape.backward(loss);
    for (const auto& [name, t] : ps.all()) {
        INFO(name);
        CHECK(!t.requires_grad());
        CHECK(!t.has_grad());
    }
}

TEST_CASE("fused image modulates by resized mask probability") {
    Rng rng(43);
    Tensor img = randt({3, 8, 8}, rng, 0.0, 1.0);
    Tensor logits = Tensor::full({4, 4}, 100.0);  // saturated -> sigmoid 1
    Tensor fused = fuse_mask(img, logits);
    for (long i = 0; i < img.numel(); ++i)
        CHECK(fused.values()[i] == doctest::Approx(img.values()[i]).epsilon(1e-12));
    Tensor zeros = Tensor::full({4, 4}, -100.0);
    Tensor dark = fuse_mask(img, zeros);
    for (long i = 0; i < img.numel(); ++i)
        CHECK(dark.values()[i] == doctest::Approx(0.0).epsilon(1e-12));
}
