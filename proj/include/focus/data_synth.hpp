#pragma once

#include <string>
#include <vector>

#include "focus/tensor.hpp"

namespace focus {

struct SynthOptions {
    long size = 96;
    std::string mode = "salient";  // salient | camouflage
    // L1 distance between 32-bin gray histograms of the two textures must
    // exceed this (salient) or stay below it (camouflage)
    double contrast_bound = 0.25;
    double min_area = 0.05;  // object area as a fraction of the image
    double max_area = 0.60;
    long max_attempts = 20;  // resamples before giving up on a scene
};

struct Scene {
    Tensor image;  // [3,H,W] in [0,1]
    Tensor mask;   // [H,W] in {0,1}
    double area_fraction = 0.0;
    double texture_distance = 0.0;
    long attempts = 1;
};

// One reproducible scene: a smooth Fourier-perturbed blob of one procedural
// texture over another, mask = 4x4-supersampled coverage > 0.5. The scene is
// a pure function of (seed, index, options); throws std::runtime_error when
// max_attempts resamples cannot satisfy the area/margin constraints.
Scene gen_scene(uint64_t seed, long index, const SynthOptions& opt);

// L1 distance between 32-bin grayscale histograms (each normalized to sum 1)
// of the pixels selected (mask true) and rejected by the mask.
double texture_histogram_distance(const Tensor& image, const Tensor& mask);

// Writes images/{index:05}.png and masks/{index:05}.png under root.
void write_dataset(const std::string& root, uint64_t seed, long count, const SynthOptions& opt);

struct Sample {
    std::string id;
    Tensor image;  // [3,H,W] in [0,1]
    Tensor mask;   // [H,W] in {0,1}, read as luminance >= 128
};

// Loads every images/*.png with a matching masks/*.png, sorted by id.
std::vector<Sample> read_dataset(const std::string& root);

}  // namespace focus
