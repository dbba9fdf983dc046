#include "focus/image.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

namespace focus {

namespace {

// symmetric reflection: -1 -> 0, -2 -> 1, n -> n-1, n+1 -> n-2
long reflect(long i, long n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

}  // namespace

Tensor to_grayscale(const Tensor& rgb) {
    if (!rgb.defined() || rgb.rank() != 3 || rgb.dim(0) != 3)
        throw std::invalid_argument("to_grayscale: expected [3,H,W], got " +
                                    shape_str(rgb.shape()));
    long H = rgb.dim(1), W = rgb.dim(2);
    Tensor g = make_tensor({H, W}, DType::F64);
    const double* p = rgb.values().data();
    long hw = H * W;
    for (long i = 0; i < hw; ++i)
        g.raw()[i] = 0.299 * p[i] + 0.587 * p[hw + i] + 0.114 * p[2 * hw + i];
    return g;
}

Tensor gaussian_blur(const Tensor& img, double sigma) {
    if (!img.defined() || img.rank() < 2)
        throw std::invalid_argument("gaussian_blur: expected [...,H,W]");
    if (sigma <= 0.0) throw std::invalid_argument("gaussian_blur: sigma must be > 0");
    long H = img.dim(-2), W = img.dim(-1);
    long C = img.numel() / (H * W);
    long r = static_cast<long>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * r + 1);
    double s = 0.0;
    for (long i = -r; i <= r; ++i) s += (k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma)));
    for (double& v : k) v /= s;

    Tensor out = make_tensor(img.shape(), DType::F64);
    std::vector<double> tmp(static_cast<size_t>(H * W));
    for (long c = 0; c < C; ++c) {
        const double* src = img.values().data() + c * H * W;
        double* dst = out.raw().data() + c * H * W;
        for (long y = 0; y < H; ++y)  // horizontal pass
            for (long x = 0; x < W; ++x) {
                double acc = 0.0;
                for (long i = -r; i <= r; ++i) acc += k[i + r] * src[y * W + reflect(x + i, W)];
                tmp[y * W + x] = acc;
            }
        for (long y = 0; y < H; ++y)  // vertical pass
            for (long x = 0; x < W; ++x) {
                double acc = 0.0;
                for (long i = -r; i <= r; ++i) acc += k[i + r] * tmp[reflect(y + i, H) * W + x];
                dst[y * W + x] = acc;
            }
    }
    return out;
}

void sobel(const Tensor& gray, Tensor& gx, Tensor& gy) {
    if (!gray.defined() || gray.rank() != 2)
        throw std::invalid_argument("sobel: expected [H,W], got " + shape_str(gray.shape()));
    long H = gray.dim(0), W = gray.dim(1);
    gx = make_tensor({H, W}, DType::F64);
    gy = make_tensor({H, W}, DType::F64);
    const double* p = gray.values().data();
    auto at = [&](long y, long x) { return p[reflect(y, H) * W + reflect(x, W)]; };
    for (long y = 0; y < H; ++y)
        for (long x = 0; x < W; ++x) {
            double tl = at(y - 1, x - 1), tc = at(y - 1, x), tr = at(y - 1, x + 1);
            double ml = at(y, x - 1), mr = at(y, x + 1);
            double bl = at(y + 1, x - 1), bc = at(y + 1, x), br = at(y + 1, x + 1);
            gx.raw()[y * W + x] = (tr + 2 * mr + br) - (tl + 2 * ml + bl);
            gy.raw()[y * W + x] = (bl + 2 * bc + br) - (tl + 2 * tc + tr);
        }
}

Tensor canny(const Tensor& gray, const CannyParams& p) {
    if (!gray.defined() || gray.rank() != 2)
        throw std::invalid_argument("canny: expected [H,W], got " + shape_str(gray.shape()));
    if (!(p.low >= 0.0 && p.low < p.high && p.high <= 1.0))
        throw std::invalid_argument("canny: need 0 <= low < high <= 1");
    long H = gray.dim(0), W = gray.dim(1);
    Tensor smooth = gaussian_blur(gray, p.sigma);
    Tensor gx, gy;
    sobel(smooth, gx, gy);
    const double norm = 4.0 * std::sqrt(2.0);
    std::vector<double> mag(static_cast<size_t>(H * W));
    for (long i = 0; i < H * W; ++i)
        mag[i] = std::hypot(gx.values()[i], gy.values()[i]) / norm;

    // non-maximum suppression along the quantized gradient direction
    std::vector<uint8_t> keep(static_cast<size_t>(H * W), 0);
    auto m = [&](long y, long x) { return (y < 0 || y >= H || x < 0 || x >= W) ? 0.0 : mag[y * W + x]; };
    for (long y = 0; y < H; ++y)
        for (long x = 0; x < W; ++x) {
            double v = mag[y * W + x];
            if (v <= 0.0) continue;
            double ang = std::atan2(gy.values()[y * W + x], gx.values()[y * W + x]);
            double deg = ang * 180.0 / M_PI;
            if (deg < 0) deg += 180.0;
            long dy, dx;
            if (deg < 22.5 || deg >= 157.5) {
                dy = 0; dx = 1;            // horizontal gradient, vertical edge
            } else if (deg < 67.5) {
                dy = 1; dx = 1;
            } else if (deg < 112.5) {
                dy = 1; dx = 0;
            } else {
                dy = 1; dx = -1;
            }
            if (v >= m(y + dy, x + dx) && v >= m(y - dy, x - dx)) keep[y * W + x] = 1;
        }

    // double threshold + hysteresis from strong pixels over 8-neighbours
    Tensor out = make_tensor({H, W}, DType::F64);
    std::vector<uint8_t> state(static_cast<size_t>(H * W), 0);  // 1 weak, 2 strong
    std::deque<long> frontier;
    for (long i = 0; i < H * W; ++i) {
        if (!keep[i]) continue;
        if (mag[i] >= p.high) {
            state[i] = 2;
            frontier.push_back(i);
        } else if (mag[i] >= p.low) {
            state[i] = 1;
        }
    }
    while (!frontier.empty()) {
        long i = frontier.front();
        frontier.pop_front();
        long y = i / W, x = i % W;
        for (long dy = -1; dy <= 1; ++dy)
            for (long dx = -1; dx <= 1; ++dx) {
                long ny = y + dy, nx = x + dx;
                if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
                long j = ny * W + nx;
                if (state[j] == 1) {
                    state[j] = 2;
                    frontier.push_back(j);
                }
            }
    }
    for (long i = 0; i < H * W; ++i) out.raw()[i] = state[i] == 2 ? 1.0 : 0.0;
    return out;
}

Tensor overlay_edges(const Tensor& rgb, const Tensor& edges, double strength) {
    if (!rgb.defined() || rgb.rank() != 3 || rgb.dim(0) != 3)
        throw std::invalid_argument("overlay_edges: expected [3,H,W] image");
    if (!edges.defined() || edges.rank() != 2 || edges.dim(0) != rgb.dim(1) ||
        edges.dim(1) != rgb.dim(2))
        throw std::invalid_argument("overlay_edges: edge map " + shape_str(edges.shape()) +
                                    " does not match image " + shape_str(rgb.shape()));
    Tensor out = rgb.clone();
    long hw = rgb.dim(1) * rgb.dim(2);
    for (long c = 0; c < 3; ++c)
        for (long i = 0; i < hw; ++i) {
            double v = out.raw()[c * hw + i] + strength * edges.values()[i];
            out.raw()[c * hw + i] = std::clamp(v, 0.0, 1.0);
        }
    return out;
}

PcaResult pca_top_component(const double* x, long n, long c, const PcaOptions& opt) {
    if (n <= 0 || c <= 0) throw std::invalid_argument("pca_top_component: empty input");
    PcaResult res;
    res.direction.assign(static_cast<size_t>(c), 0.0);
    res.scores.assign(static_cast<size_t>(n), 0.0);

    std::vector<double> mu(static_cast<size_t>(c), 0.0);
    for (long i = 0; i < n; ++i)
        for (long j = 0; j < c; ++j) mu[j] += x[i * c + j];
    for (double& v : mu) v /= n;

    std::vector<double> var(static_cast<size_t>(c), 0.0);
    for (long i = 0; i < n; ++i)
        for (long j = 0; j < c; ++j) {
            double d = x[i * c + j] - mu[j];
            var[j] += d * d;
        }
    long start = 0;
    for (long j = 1; j < c; ++j)
        if (var[j] > var[start]) start = j;
    if (var[start] <= 1e-18 * n) {
        res.degenerate = true;
        return res;
    }

    std::vector<double> v(static_cast<size_t>(c), 0.0), w(static_cast<size_t>(c));
    std::vector<double> proj(static_cast<size_t>(n));
    v[start] = 1.0;
    double lambda = 0.0;
    for (int it = 0; it < opt.max_iters; ++it) {
        res.iterations = it + 1;
        // w = Cov * v computed as X_c^T (X_c v) / n without forming Cov
        for (long i = 0; i < n; ++i) {
            double s = 0.0;
            for (long j = 0; j < c; ++j) s += (x[i * c + j] - mu[j]) * v[j];
            proj[i] = s;
        }
        std::fill(w.begin(), w.end(), 0.0);
        for (long i = 0; i < n; ++i)
            for (long j = 0; j < c; ++j) w[j] += proj[i] * (x[i * c + j] - mu[j]);
        double nw = 0.0;
        for (long j = 0; j < c; ++j) {
            w[j] /= n;
            nw += w[j] * w[j];
        }
        nw = std::sqrt(nw);
        if (nw < 1e-300) {
            res.degenerate = true;
            return res;
        }
        lambda = nw;
        double delta = 0.0;
        for (long j = 0; j < c; ++j) {
            w[j] /= nw;
            delta = std::max(delta, std::fabs(w[j] - v[j]));
        }
        v = w;
        if (delta < opt.tol) break;
    }
    res.eigenvalue = lambda;
    for (long i = 0; i < n; ++i) {
        double s = 0.0;
        for (long j = 0; j < c; ++j) s += (x[i * c + j] - mu[j]) * v[j];
        res.scores[i] = s;
    }
    // deterministic orientation: mean magnitude of positive scores must be >=
    // mean magnitude of negative scores (empty side counts as 0); flip otherwise
    double pos = 0.0, neg = 0.0;
    long npos = 0, nneg = 0;
    for (long i = 0; i < n; ++i) {
        if (res.scores[i] > 0) { pos += res.scores[i]; ++npos; }
        else if (res.scores[i] < 0) { neg -= res.scores[i]; ++nneg; }
    }
    if (npos) pos /= npos;
    if (nneg) neg /= nneg;
    if (pos < neg) {
        for (double& q : v) q = -q;
        for (double& s : res.scores) s = -s;
    }
    res.direction = v;
    return res;
}

}  // namespace focus
