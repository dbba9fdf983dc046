#pragma once

#include <cstdint>
#include <string>

namespace focus {

// One flat bag of knobs for the whole pipeline. Defaults are the desk preset:
// small enough to train on a laptop CPU in minutes while exercising every
// code path of the full architecture.
struct RunConfig {
    uint64_t seed = 0;

    long image_size = 96;  // inputs are resized here; must be divisible by 32

    // model widths and depths
    long c = 64;                // ground-query / decoder width
    long d = 64;                // edge + pyramid feature width
    long cb = 64;               // backbone token width
    long s = 32;                // contrastive embedding width
    long l_dec = 3;             // ground decoder layers
    long n_enc = 2;             // pixel decoder (deformable encoder) layers
    long heads = 4;             // deformable attention heads
    long points = 4;            // sampling points per head per level
    long backbone_blocks = 4;   // frozen-scale stand-in transformer depth
    long backbone_heads = 4;
    long patch = 16;

    // contrastive refiner
    bool clip_enabled = true;
    double clip_tau = 0.07;
    long clip_image_size = 64;
    std::string prompt_foreground = "the salient foreground object";
    std::string prompt_background = "the cluttered background region";

    // edge extraction applied to the input before the edge net
    double canny_sigma = 1.0;
    double canny_low = 0.1;
    double canny_high = 0.2;
    double overlay_strength = 1.0;

    // loss weights
    double lambda_clip = 1.0;
    double lambda_label = 1.0;
    double lambda_mask = 5.0;
    double lambda_bbox = 1.0;
    bool deep_supervision = true;

    // optimizer
    double lr = 2e-4;
    double weight_decay = 0.05;
    double grad_clip = 0.01;  // global L2 max-norm, <= 0 disables
    long iterations = 3000;
    long batch_size = 4;
    long checkpoint_every = 1000;

    // synthetic data generator
    std::string synth_mode = "salient";  // or "camouflage"
    long synth_train = 300;
    long synth_test = 50;
    // salient scenes must separate fg/bg texture histograms by at least
    // this much; camouflage scenes must stay under it
    double synth_contrast_bound = 0.25;

    // dataset roots (each with images/ and masks/)
    std::string data_train;
    std::string data_test;

    // metric variants
    std::string e_variant = "adaptive";  // adaptive | sweep_mean | sweep_max
    std::string f_variant = "max";       // max | mean | adaptive
};

// Named starting points. "desk" is the defaults above; "paper" switches to
// the published training recipe (512 inputs, lr 1e-5, 20k iterations, batch 8)
// while keeping the desk-scale widths.
RunConfig preset_config(const std::string& name);

// Set one "dotted.key = value" entry. Unknown keys and unparsable values
// throw std::invalid_argument.
void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value);

// Overlay a config file: one "key = value" per line, '#' comments, blank
// lines ignored.
void load_config_file(RunConfig& cfg, const std::string& path);

// Canonical text form (sorted keys, full precision); parse_config_text reads
// it back so configs can ride inside checkpoints.
std::string config_to_text(const RunConfig& cfg);
RunConfig parse_config_text(const std::string& text, RunConfig base = RunConfig());

// Sanity-check ranges and divisibility; throws std::invalid_argument.
void validate_config(const RunConfig& cfg);

}  // namespace focus
