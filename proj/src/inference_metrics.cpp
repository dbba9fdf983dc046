#include "focus/inference_metrics.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace focus {

namespace {

void check_pair(const Tensor& soft, const Tensor& gt, const char* who) {
    if (soft.rank() != 2 || gt.rank() != 2 || soft.dim(0) != gt.dim(0) ||
        soft.dim(1) != gt.dim(1)) {
        throw std::invalid_argument(std::string(who) + ": prediction/gt must share an [H,W] shape");
    }
    for (double v : soft.values()) {
        if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument(std::string(who) + ": prediction values must lie in [0,1]");
    }
}

std::vector<int> binarize_gt(const Tensor& gt) {
    std::vector<int> g(gt.numel());
    for (long i = 0; i < gt.numel(); ++i) g[i] = gt.values()[i] > 0.5 ? 1 : 0;
    return g;
}

double f_from_counts(double tp, double fp, double fn, double beta2) {
    double p_den = tp + fp, r_den = tp + fn;
    if (p_den == 0.0 || r_den == 0.0) return 0.0;
    double p = tp / p_den, r = tp / r_den;
    double den = beta2 * p + r;
    return den == 0.0 ? 0.0 : (1.0 + beta2) * p * r / den;
}

}  // namespace

FuseResult fuse_probs(const Prediction& pred, long out_h, long out_w) {
    NoGrad ng;
    FuseResult res;
    Tensor probs = softmax(pred.class_logits);  // [2,2], column 0 = foreground
    double pfg0 = probs.at({0, 0}), pfg1 = probs.at({1, 0});
    bool claim0 = pfg0 >= 0.5, claim1 = pfg1 >= 0.5;
    if (claim0 != claim1) {
        res.fg_query = claim0 ? 0 : 1;
    } else {
        // both queries claim the same class: the stronger foreground
        // probability takes the foreground role, query 0 on an exact tie
        res.role_conflict = true;
        res.fg_query = pfg0 >= pfg1 ? 0 : 1;
    }
    long qf = res.fg_query, qb = 1 - qf;

    long h = pred.mask_logits.dim(1), w = pred.mask_logits.dim(2);
    Tensor sm = sigmoid(pred.mask_logits);
    const double pf = probs.at({qf, 0});
    const double pb = probs.at({qb, 1});
    const double delta = 1e-12;
    Tensor soft4 = Tensor::zeros({h, w});
    for (long i = 0; i < h * w; ++i) {
        double f = pf * sm.values()[qf * h * w + i];
        double b = pb * sm.values()[qb * h * w + i];
        soft4.raw()[i] = (f + delta) / (f + b + 2.0 * delta);
    }
    res.soft = resize_bilinear(reshape(soft4, {1, h, w}), out_h, out_w);
    res.soft = reshape(res.soft, {out_h, out_w});
    res.binary = Tensor::zeros({out_h, out_w});
    for (long i = 0; i < out_h * out_w; ++i)
        res.binary.raw()[i] = res.soft.values()[i] > 0.5 ? 1.0 : 0.0;
    return res;
}

double metric_mae(const Tensor& soft, const Tensor& gt) {
    check_pair(soft, gt, "mae");
    std::vector<int> g = binarize_gt(gt);
    double s = 0.0;
    for (long i = 0; i < soft.numel(); ++i) s += std::fabs(soft.values()[i] - g[i]);
    return s / static_cast<double>(soft.numel());
}

double metric_ber(const Tensor& soft, const Tensor& gt) {
    check_pair(soft, gt, "ber");
    std::vector<int> g = binarize_gt(gt);
    double tp = 0, tn = 0, fp = 0, fn = 0;
    for (long i = 0; i < soft.numel(); ++i) {
        int p = soft.values()[i] > 0.5 ? 1 : 0;
        if (g[i] && p) ++tp;
        else if (g[i] && !p) ++fn;
        else if (!g[i] && p) ++fp;
        else ++tn;
    }
    if (tp + fn == 0.0 || tn + fp == 0.0)
        throw std::invalid_argument("ber: ground truth contains a single class");
    return 100.0 * (1.0 - 0.5 * (tp / (tp + fn) + tn / (tn + fp)));
}

double metric_f1(const Tensor& soft, const Tensor& gt, bool* empty_gt) {
    check_pair(soft, gt, "f1");
    std::vector<int> g = binarize_gt(gt);
    double tp = 0, fp = 0, fn = 0;
    long npos = 0;
    for (long i = 0; i < soft.numel(); ++i) {
        int p = soft.values()[i] > 0.5 ? 1 : 0;
        npos += g[i];
        if (g[i] && p) ++tp;
        else if (!g[i] && p) ++fp;
        else if (g[i] && !p) ++fn;
    }
    if (npos == 0 && empty_gt) *empty_gt = true;
    return f_from_counts(tp, fp, fn, 1.0);
}

double metric_fbeta(const Tensor& soft, const Tensor& gt, const std::string& variant,
                    bool* empty_gt) {
    check_pair(soft, gt, "fbeta");
    std::vector<int> g = binarize_gt(gt);
    long npos = std::accumulate(g.begin(), g.end(), 0L);
    if (npos == 0) {
        if (empty_gt) *empty_gt = true;
        return 0.0;
    }
    const double beta2 = 0.3;
    if (variant == "adaptive") {
        double m = std::accumulate(soft.values().begin(), soft.values().end(), 0.0) /
                   static_cast<double>(soft.numel());
        double th = std::clamp(2.0 * m, 1e-12, 1.0);
        double tp = 0, fp = 0, fn = 0;
        for (long i = 0; i < soft.numel(); ++i) {
            int p = soft.values()[i] >= th ? 1 : 0;
            if (g[i] && p) ++tp;
            else if (!g[i] && p) ++fp;
            else if (g[i] && !p) ++fn;
        }
        return f_from_counts(tp, fp, fn, beta2);
    }
    double best = 0.0, acc = 0.0;
    for (int t = 0; t < 256; ++t) {
        double th = t / 255.0;
        double tp = 0, fp = 0, fn = 0;
        for (long i = 0; i < soft.numel(); ++i) {
            int p = soft.values()[i] >= th ? 1 : 0;
            if (g[i] && p) ++tp;
            else if (!g[i] && p) ++fp;
            else if (g[i] && !p) ++fn;
        }
        double f = f_from_counts(tp, fp, fn, beta2);
        best = std::max(best, f);
        acc += f;
    }
    if (variant == "max") return best;
    if (variant == "mean") return acc / 256.0;
    throw std::invalid_argument("fbeta: unknown variant '" + variant + "'");
}

double metric_weighted_fbeta(const Tensor& soft, const Tensor& gt, bool* empty_gt) {
    check_pair(soft, gt, "weighted_fbeta");
    const long h = soft.dim(0), w = soft.dim(1), n = h * w;
    std::vector<int> g = binarize_gt(gt);
    std::vector<long> fg;
    for (long i = 0; i < n; ++i)
        if (g[i]) fg.push_back(i);
    if (fg.empty()) {
        if (empty_gt) *empty_gt = true;
        return 0.0;
    }

    std::vector<double> err(n);
    for (long i = 0; i < n; ++i) err[i] = std::fabs(soft.values()[i] - g[i]);

    // background errors are replaced by the error at the nearest foreground
    // pixel (exact Euclidean distance; ties keep the first pixel in
    // row-major order), and that distance decays the pixel's weight
    std::vector<double> et = err, dst(n, 0.0);
    for (long i = 0; i < n; ++i) {
        if (g[i]) continue;
        long y = i / w, x = i % w;
        double best = DBL_MAX;
        long arg = fg[0];
        for (long j : fg) {
            double dy = static_cast<double>(y - j / w), dx = static_cast<double>(x - j % w);
            double d2 = dy * dy + dx * dx;
            if (d2 < best) {
                best = d2;
                arg = j;
            }
        }
        dst[i] = std::sqrt(best);
        et[i] = err[arg];
    }

    // 7x7 Gaussian (sigma 5, normalized), zero-padded correlation
    double k[7][7], ksum = 0.0;
    for (int dy = -3; dy <= 3; ++dy)
        for (int dx = -3; dx <= 3; ++dx)
            ksum += k[dy + 3][dx + 3] = std::exp(-(dy * dy + dx * dx) / 50.0);
    for (auto& row : k)
        for (double& v : row) v /= ksum;
    std::vector<double> ea(n, 0.0);
    for (long y = 0; y < h; ++y)
        for (long x = 0; x < w; ++x) {
            double s = 0.0;
            for (int dy = -3; dy <= 3; ++dy)
                for (int dx = -3; dx <= 3; ++dx) {
                    long yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                    s += et[yy * w + xx] * k[dy + 3][dx + 3];
                }
            ea[y * w + x] = s;
        }

    double sum_ew_fg = 0.0, sum_ew_bg = 0.0;
    const double decay = std::log(0.5) / 5.0;
    for (long i = 0; i < n; ++i) {
        double e = err[i];
        double b = 1.0;
        if (g[i]) {
            if (ea[i] < err[i]) e = ea[i];  // neighbourhood forgives near-misses
            sum_ew_fg += e * b;
        } else {
            b = 2.0 - std::exp(decay * dst[i]);
            sum_ew_bg += e * b;
        }
    }
    const double nfg = static_cast<double>(fg.size());
    double tpw = nfg - sum_ew_fg;
    double fpw = sum_ew_bg;
    double r = 1.0 - sum_ew_fg / nfg;
    double p = tpw / (tpw + fpw + DBL_EPSILON);
    double den = r + p + DBL_EPSILON;
    return den == 0.0 ? 0.0 : 2.0 * r * p / den;
}

double metric_auc(const Tensor& soft, const Tensor& gt) {
    check_pair(soft, gt, "auc");
    std::vector<int> g = binarize_gt(gt);
    const long n = soft.numel();
    long npos = std::accumulate(g.begin(), g.end(), 0L);
    long nneg = n - npos;
    if (npos == 0 || nneg == 0) return 0.5;
    std::vector<long> order(n);
    std::iota(order.begin(), order.end(), 0L);
    std::stable_sort(order.begin(), order.end(), [&](long a, long b) {
        return soft.values()[a] < soft.values()[b];
    });
    // midranks over tied scores
    double rank_pos = 0.0;
    long i = 0;
    while (i < n) {
        long j = i;
        while (j + 1 < n && soft.values()[order[j + 1]] == soft.values()[order[i]]) ++j;
        double mid = 0.5 * static_cast<double>((i + 1) + (j + 1));
        for (long t = i; t <= j; ++t)
            if (g[order[t]]) rank_pos += mid;
        i = j + 1;
    }
    double np = static_cast<double>(npos), nn = static_cast<double>(nneg);
    return (rank_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

namespace {

// object-level similarity of masked values: 2x / (x^2 + 1 + sigma_x)
double object_score(const std::vector<double>& vals) {
    if (vals.empty()) return 0.0;
    double x = std::accumulate(vals.begin(), vals.end(), 0.0) / vals.size();
    double sigma = 0.0;
    if (vals.size() > 1) {
        for (double v : vals) sigma += (v - x) * (v - x);
        sigma = std::sqrt(sigma / (vals.size() - 1.0));
    }
    return 2.0 * x / (x * x + 1.0 + sigma + DBL_EPSILON);
}

// region SSIM on one quadrant
double region_ssim(const std::vector<double>& p, const std::vector<double>& g) {
    const double n = static_cast<double>(p.size());
    if (p.empty()) return 0.0;
    double x = std::accumulate(p.begin(), p.end(), 0.0) / n;
    double y = std::accumulate(g.begin(), g.end(), 0.0) / n;
    double sx = 0, sy = 0, sxy = 0;
    for (size_t i = 0; i < p.size(); ++i) {
        sx += (p[i] - x) * (p[i] - x);
        sy += (g[i] - y) * (g[i] - y);
        sxy += (p[i] - x) * (g[i] - y);
    }
    double den = n - 1.0 + DBL_EPSILON;
    sx /= den, sy /= den, sxy /= den;
    double alpha = 4.0 * x * y * sxy;
    double beta = (x * x + y * y) * (sx + sy);
    if (alpha != 0.0) return alpha / (beta + DBL_EPSILON);
    return beta == 0.0 ? 1.0 : 0.0;
}

}  // namespace

double metric_s_measure(const Tensor& soft, const Tensor& gt) {
    check_pair(soft, gt, "s_measure");
    const long h = soft.dim(0), w = soft.dim(1), n = h * w;
    std::vector<int> g = binarize_gt(gt);
    double total = std::accumulate(g.begin(), g.end(), 0.0);
    double mean_pred =
        std::accumulate(soft.values().begin(), soft.values().end(), 0.0) / n;
    double y = total / n;
    if (y == 0.0) return 1.0 - mean_pred;
    if (y == 1.0) return mean_pred;

    // object term: foreground similarity on pred, background on 1 - pred
    std::vector<double> pf, pb;
    for (long i = 0; i < n; ++i)
        (g[i] ? pf : pb).push_back(g[i] ? soft.values()[i] : 1.0 - soft.values()[i]);
    double s_object = y * object_score(pf) + (1.0 - y) * object_score(pb);

    // region term: split both maps at the (1-based, rounded) gt centroid
    double cx = 0, cy = 0;
    for (long i = 0; i < n; ++i)
        if (g[i]) {
            cy += static_cast<double>(i / w + 1);
            cx += static_cast<double>(i % w + 1);
        }
    long X = std::llround(cx / total), Y = std::llround(cy / total);
    double s_region = 0.0;
    const long y0[4] = {0, 0, Y, Y}, y1[4] = {Y, Y, h, h};
    const long x0[4] = {0, X, 0, X}, x1[4] = {X, w, X, w};
    for (int q = 0; q < 4; ++q) {
        std::vector<double> qp, qg;
        for (long yy = y0[q]; yy < y1[q]; ++yy)
            for (long xx = x0[q]; xx < x1[q]; ++xx) {
                qp.push_back(soft.values()[yy * w + xx]);
                qg.push_back(static_cast<double>(g[yy * w + xx]));
            }
        double wq = static_cast<double>((y1[q] - y0[q]) * (x1[q] - x0[q])) / n;
        s_region += wq * region_ssim(qp, qg);
    }

    return std::max(0.0, 0.5 * s_object + 0.5 * s_region);
}

namespace {

double e_measure_from_binary(const std::vector<int>& fm, const std::vector<int>& g, long n) {
    long gsum = std::accumulate(g.begin(), g.end(), 0L);
    long fsum = std::accumulate(fm.begin(), fm.end(), 0L);
    double acc = 0.0;
    if (gsum == 0) {
        for (long i = 0; i < n; ++i) acc += 1.0 - fm[i];
    } else if (gsum == n) {
        for (long i = 0; i < n; ++i) acc += fm[i];
    } else {
        double mu_g = static_cast<double>(gsum) / n, mu_f = static_cast<double>(fsum) / n;
        for (long i = 0; i < n; ++i) {
            double dg = g[i] - mu_g, df = fm[i] - mu_f;
            double align = 2.0 * dg * df / (dg * dg + df * df + DBL_EPSILON);
            acc += (align + 1.0) * (align + 1.0) / 4.0;
        }
    }
    return acc / static_cast<double>(n);
}

}  // namespace

double metric_e_measure(const Tensor& soft, const Tensor& gt, const std::string& variant) {
    check_pair(soft, gt, "e_measure");
    const long n = soft.numel();
    std::vector<int> g = binarize_gt(gt);
    if (variant == "adaptive") {
        double m = std::accumulate(soft.values().begin(), soft.values().end(), 0.0) / n;
        double th = std::clamp(2.0 * m, 1e-12, 1.0);
        std::vector<int> fm(n);
        for (long i = 0; i < n; ++i) fm[i] = soft.values()[i] >= th ? 1 : 0;
        return e_measure_from_binary(fm, g, n);
    }
    if (variant != "sweep_mean" && variant != "sweep_max")
        throw std::invalid_argument("e_measure: unknown variant '" + variant + "'");
    double best = 0.0, acc = 0.0;
    for (int t = 0; t < 256; ++t) {
        double th = t / 255.0;
        std::vector<int> fm(n);
        for (long i = 0; i < n; ++i) fm[i] = soft.values()[i] >= th ? 1 : 0;
        double e = e_measure_from_binary(fm, g, n);
        best = std::max(best, e);
        acc += e;
    }
    return variant == "sweep_max" ? best : acc / 256.0;
}

MetricsReport compute_metrics(const Tensor& soft, const Tensor& gt, const MetricOptions& opt) {
    MetricsReport r;
    bool empty = false;
    r.mae = metric_mae(soft, gt);
    try {
        r.ber = metric_ber(soft, gt);
    } catch (const std::invalid_argument&) {
        r.ber = std::numeric_limits<double>::quiet_NaN();
        empty = true;
    }
    r.f1 = metric_f1(soft, gt, &empty);
    r.fbeta = metric_fbeta(soft, gt, opt.f_variant, &empty);
    r.weighted_fbeta = metric_weighted_fbeta(soft, gt, &empty);
    r.auc = metric_auc(soft, gt);
    r.s_measure = metric_s_measure(soft, gt);
    r.e_measure = metric_e_measure(soft, gt, opt.e_variant);
    r.empty_gt_warning = empty;
    return r;
}

}  // namespace focus
