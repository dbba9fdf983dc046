#pragma once

#include <string>

#include "focus/seg_decoder.hpp"

namespace focus {

// Collapse the final two-query prediction into one foreground probability
// map. Roles come from the class argmax (a per-query probability >= 0.5
// counts as a foreground claim); when both queries claim the same class the
// higher foreground probability wins the foreground role (exact tie: query
// 0), and role_conflict is set so callers can log it. Per pixel,
//   p_f = P(fg | q_f) * sigmoid(m_f),  p_b = P(bg | q_b) * sigmoid(m_b),
//   soft = (p_f + 1e-12) / (p_f + p_b + 2e-12),
// computed at the mask grid, upsampled bilinearly, then thresholded
// strictly at 0.5.
struct FuseResult {
    Tensor soft;    // [out_h, out_w] in [0,1]
    Tensor binary;  // {0,1}
    long fg_query = 0;
    bool role_conflict = false;
};
FuseResult fuse_probs(const Prediction& pred, long out_h, long out_w);

struct MetricOptions {
    std::string e_variant = "adaptive";  // adaptive | sweep_mean | sweep_max
    std::string f_variant = "max";       // max | mean | adaptive
};

struct MetricsReport {
    double mae = 0, ber = 0, f1 = 0, fbeta = 0, weighted_fbeta = 0, auc = 0, s_measure = 0,
           e_measure = 0;
    bool empty_gt_warning = false;
};

// soft: [H,W] in [0,1]; gt: [H,W], binarized at 0.5 internally. A
// single-class gt sets the warning flag, records NaN for BER (standalone
// metric_ber throws instead) and 0.5 for AUC.
MetricsReport compute_metrics(const Tensor& soft, const Tensor& gt,
                              const MetricOptions& opt = {});

// individual metrics, exposed for testing against independent oracles
double metric_mae(const Tensor& soft, const Tensor& gt);
// balanced error rate in percent over the 0.5-binarized prediction; a
// single-class ground truth is an error
double metric_ber(const Tensor& soft, const Tensor& gt);
double metric_f1(const Tensor& soft, const Tensor& gt, bool* empty_gt = nullptr);
// beta^2 = 0.3 over 256 thresholds i/255 (>=), reduced per f_variant
double metric_fbeta(const Tensor& soft, const Tensor& gt, const std::string& variant = "max",
                    bool* empty_gt = nullptr);
// boundary-aware F (beta^2 = 1): errors at background pixels inherit the
// error of their (Euclidean-)nearest foreground pixel, a 7x7 sigma-5
// Gaussian spreads errors, and distance-decayed weights soften far misses
double metric_weighted_fbeta(const Tensor& soft, const Tensor& gt, bool* empty_gt = nullptr);
// Mann-Whitney AUC with midranks for ties; 0.5 on a single-class gt
double metric_auc(const Tensor& soft, const Tensor& gt);
// structure measure: 0.5 * object similarity + 0.5 * 4-quadrant SSIM
double metric_s_measure(const Tensor& soft, const Tensor& gt);
// enhanced-alignment measure on the prediction binarized at 2*mean
double metric_e_measure(const Tensor& soft, const Tensor& gt,
                        const std::string& variant = "adaptive");

}  // namespace focus
