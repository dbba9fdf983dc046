#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "focus/data_synth.hpp"

using namespace focus;
namespace fs = std::filesystem;

namespace {

bool tensors_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    for (long i = 0; i < a.numel(); ++i)
        if (a.values()[i] != b.values()[i]) return false;
    return true;
}

double mask_area(const Tensor& mask) {
    double s = 0;
    for (double v : mask.values()) s += v;
    return s / static_cast<double>(mask.numel());
}

}  // namespace

TEST_CASE("scenes are pure functions of (seed, index, options)") {
    SynthOptions opt;
    opt.size = 48;
    Scene a = gen_scene(11, 3, opt);
    Scene b = gen_scene(11, 3, opt);
    CHECK(tensors_equal(a.image, b.image));
    CHECK(tensors_equal(a.mask, b.mask));
    CHECK(a.area_fraction == b.area_fraction);
    CHECK(a.texture_distance == b.texture_distance);

    Scene c = gen_scene(11, 4, opt);
    CHECK(!tensors_equal(a.image, c.image));
    Scene d = gen_scene(12, 3, opt);
    CHECK(!tensors_equal(a.image, d.image));
}

TEST_CASE("scene geometry: shape, value range, area band, pixel margin") {
    SynthOptions opt;
    opt.size = 48;
    for (long idx = 0; idx < 8; ++idx) {
        Scene s = gen_scene(21, idx, opt);
        REQUIRE(s.image.shape() == Shape{3, 48, 48});
        REQUIRE(s.mask.shape() == Shape{48, 48});
        for (double v : s.image.values()) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        for (double v : s.mask.values()) CHECK((v == 0.0 || v == 1.0));

        double area = mask_area(s.mask);
        CHECK(area >= opt.min_area);
        CHECK(area <= opt.max_area);
        CHECK(s.area_fraction == doctest::Approx(area).epsilon(1e-12));

        // the object never touches the 2-pixel border band
        for (long y = 0; y < 48; ++y)
            for (long x = 0; x < 48; ++x)
                if (y < 2 || y >= 46 || x < 2 || x >= 46) CHECK(s.mask.at({y, x}) == 0.0);
    }
}

TEST_CASE("salient scenes separate textures; camouflage scenes match them") {
    SynthOptions opt;
    opt.size = 48;
    opt.mode = "salient";
    for (long idx = 0; idx < 6; ++idx) {
        Scene s = gen_scene(31, idx, opt);
        CHECK(s.texture_distance > opt.contrast_bound);
        CHECK(s.texture_distance ==
              doctest::Approx(texture_histogram_distance(s.image, s.mask)).epsilon(1e-12));
    }
    opt.mode = "camouflage";
    for (long idx = 0; idx < 6; ++idx) {
        Scene s = gen_scene(31, idx, opt);
        CHECK(s.texture_distance < opt.contrast_bound);
    }
}

TEST_CASE("histogram distance: disjoint gray levels max out, empty side is zero") {
    Tensor img = Tensor::zeros({3, 4, 4});
    Tensor mask = Tensor::zeros({4, 4});
    for (long y = 0; y < 4; ++y)
        for (long x = 0; x < 2; ++x) mask.raw()[y * 4 + x] = 1.0;
    for (long ch = 0; ch < 3; ++ch)
        for (long y = 0; y < 4; ++y)
            for (long x = 0; x < 4; ++x)
                img.raw()[(ch * 4 + y) * 4 + x] = x < 2 ? 0.1 : 0.9;
    // both normalized histograms concentrate in one (different) bin
    CHECK(texture_histogram_distance(img, mask) == doctest::Approx(2.0).epsilon(1e-12));

    Tensor none = Tensor::zeros({4, 4});
    CHECK(texture_histogram_distance(img, none) == 0.0);
    Tensor all = Tensor::full({4, 4}, 1.0);
    CHECK(texture_histogram_distance(img, all) == 0.0);
}

TEST_CASE("impossible contrast constraints raise after bounded retries") {
    SynthOptions opt;
    opt.size = 48;
    opt.mode = "salient";
    opt.contrast_bound = 1.999;  // essentially disjoint histograms: unreachable
    opt.max_attempts = 5;
    CHECK_THROWS_AS(gen_scene(41, 0, opt), std::runtime_error);
}

TEST_CASE("dataset round trip through png preserves masks exactly") {
    fs::path root = fs::temp_directory_path() / "focus_synth_rt";
    fs::remove_all(root);
    SynthOptions opt;
    opt.size = 32;
    write_dataset(root.string(), 51, 3, opt);
    CHECK(fs::exists(root / "images" / "00000.png"));
    CHECK(fs::exists(root / "masks" / "00002.png"));

    std::vector<Sample> ds = read_dataset(root.string());
    REQUIRE(ds.size() == 3);
    CHECK(ds[0].id == "00000");
    CHECK(ds[2].id == "00002");
    for (long i = 0; i < 3; ++i) {
        Scene s = gen_scene(51, i, opt);
        REQUIRE(ds[i].image.shape() == Shape{3, 32, 32});
        CHECK(tensors_equal(ds[i].mask, s.mask));  // binary masks survive 8-bit exactly
        // images are quantized to 8 bits: half-step agreement
        double worst = 0;
        for (long k = 0; k < s.image.numel(); ++k)
            worst = std::max(worst, std::fabs(ds[i].image.values()[k] - s.image.values()[k]));
        CHECK(worst <= 0.5 / 255.0 + 1e-12);
    }
    fs::remove_all(root);
}
