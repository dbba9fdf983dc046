#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "focus/config.hpp"

using namespace focus;

TEST_CASE("config text round trips every key") {
    RunConfig c;
    c.seed = 1234;
    c.image_size = 64;
    c.l_dec = 5;
    c.clip_tau = 0.11;
    c.prompt_foreground = "a bright thing";
    c.data_train = "/tmp/xyz";
    c.deep_supervision = false;
    c.synth_contrast_bound = 0.5;
    RunConfig back = parse_config_text(config_to_text(c));
    CHECK(config_to_text(back) == config_to_text(c));
    CHECK(back.seed == 1234);
    CHECK(back.l_dec == 5);
    CHECK(back.clip_tau == doctest::Approx(0.11).epsilon(0));
    CHECK(back.prompt_foreground == "a bright thing");
    CHECK(back.deep_supervision == false);
    CHECK(back.synth_contrast_bound == 0.5);
}

TEST_CASE("unknown keys and bad values are rejected") {
    RunConfig c;
    CHECK_THROWS_AS(apply_config_entry(c, "no.such.key", "1"), std::invalid_argument);
    CHECK_THROWS_AS(apply_config_entry(c, "train.iterations", "soon"), std::invalid_argument);
    CHECK_THROWS_AS(apply_config_entry(c, "optim.lr", ""), std::invalid_argument);
}

TEST_CASE("config file loading skips comments and blanks") {
    std::string path = "/tmp/focus_test_config.txt";
    {
        std::ofstream f(path);
        f << "# a comment\n\n  train.iterations = 7\nmodel.heads=2  \n";
    }
    RunConfig c;
    load_config_file(c, path);
    CHECK(c.iterations == 7);
    CHECK(c.heads == 2);
    std::remove(path.c_str());
}

TEST_CASE("validation rejects out-of-range settings") {
    RunConfig c;
    validate_config(c);  // defaults are fine
    RunConfig bad = c;
    bad.image_size = 100;  // not divisible by 32
    CHECK_THROWS_AS(validate_config(bad), std::invalid_argument);
    bad = c;
    bad.clip_tau = 0.0;
    CHECK_THROWS_AS(validate_config(bad), std::invalid_argument);
    bad = c;
    bad.heads = 3;  // does not divide d = 64
    CHECK_THROWS_AS(validate_config(bad), std::invalid_argument);
    bad = c;
    bad.canny_low = 0.5;
    bad.canny_high = 0.2;
    CHECK_THROWS_AS(validate_config(bad), std::invalid_argument);
    bad = c;
    bad.synth_mode = "plaid";
    CHECK_THROWS_AS(validate_config(bad), std::invalid_argument);
    bad = c;
    bad.e_variant = "always_one";
    CHECK_THROWS_AS(validate_config(bad), std::invalid_argument);
}

TEST_CASE("presets: desk equals defaults, paper changes the recipe only") {
    RunConfig desk = preset_config("desk");
    CHECK(config_to_text(desk) == config_to_text(RunConfig()));
    RunConfig paper = preset_config("paper");
    CHECK(paper.image_size == 512);
    CHECK(paper.iterations == 20000);
    CHECK(paper.batch_size == 8);
    CHECK(paper.lr == 1e-5);
    CHECK(paper.c == desk.c);  // widths stay desk-sized
    CHECK_THROWS_AS(preset_config("gigantic"), std::invalid_argument);
}
