#pragma once

#include <vector>

#include "focus/tensor.hpp"

namespace focus {

// Images are plain tensors: [H,W] grayscale or [3,H,W] RGB, values in [0,1].
// Nothing here records gradients; these run in the data path.

Tensor to_grayscale(const Tensor& rgb);  // 0.299 R + 0.587 G + 0.114 B

// separable Gaussian, radius ceil(3*sigma), symmetric reflection at borders
// (index -1 maps back to 0); throws when sigma <= 0
Tensor gaussian_blur(const Tensor& img, double sigma);

// 3x3 Sobel derivatives of a [H,W] image, reflected borders
void sobel(const Tensor& gray, Tensor& gx, Tensor& gy);

struct CannyParams {
    double sigma = 1.0;  // pre-smoothing
    double low = 0.1;    // thresholds on gradient magnitude normalized by 4*sqrt(2),
    double high = 0.2;   // the largest magnitude Sobel can produce on [0,1] input
};

// classic chain: blur, Sobel, non-maximum suppression (ties kept so 2-wide
// plateaus survive), double threshold with 8-connected hysteresis.
// Returns a {0,1}-valued [H,W] map; constant images produce an empty map.
Tensor canny(const Tensor& gray, const CannyParams& p = {});

// out = clamp(img + strength * edges, 0, 1) applied to every channel
Tensor overlay_edges(const Tensor& rgb, const Tensor& edges, double strength = 1.0);

struct PcaOptions {
    int max_iters = 200;
    double tol = 1e-9;
};

struct PcaResult {
    std::vector<double> direction;  // unit-length principal axis, c entries
    std::vector<double> scores;     // projections of the centered rows, n entries
    double eigenvalue = 0.0;
    int iterations = 0;
    bool degenerate = false;  // no variance: direction/scores are zeros
};

// top principal component of n rows with c features via power iteration on
// the covariance. Start vector is the axis of largest variance; the sign is
// fixed so the mean magnitude of positive scores is >= that of negative ones.
PcaResult pca_top_component(const double* x, long n, long c, const PcaOptions& opt = {});

}  // namespace focus
