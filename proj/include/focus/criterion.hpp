#pragma once

#include <vector>

#include "focus/clip_refiner.hpp"
#include "focus/seg_decoder.hpp"

namespace focus {

// Ground truth prepared for the two-query criterion: the binary mask block-
// averaged to the prediction grid (fraction > 0.5 -> 1) plus tight boxes in
// normalized (cx,cy,w,h) computed from the full-resolution mask. Row 0 is
// the foreground target, row 1 the background complement.
struct Targets {
    Tensor masks;  // [2, h4, w4] binary
    Tensor boxes;  // [2, 4]
};
Targets build_targets(const Tensor& gt, long h4, long w4);

// losses (all return scalar graph tensors)
Tensor bce_with_logits(const Tensor& logits, const Tensor& target);  // mean over elements
Tensor dice_loss(const Tensor& logits, const Tensor& target);        // smoothing 1
Tensor mask_loss(const Tensor& logits, const Tensor& target);        // bce + dice
Tensor label_loss(const Tensor& class_logits_row, long label);       // 2-class CE
// 5 * mean|delta(cx,cy,w,h)| + 2 * (1 - gIoU of the corner boxes)
Tensor bbox_loss(const Tensor& pred_box, const Tensor& target_box);
Tensor giou_cxcywh(const Tensor& a, const Tensor& b);  // scalar in [-1, 1]

// exact minimum-cost assignment of an n x n matrix (row-major); returns the
// column matched to each row
std::vector<int> hungarian(const std::vector<double>& cost, int n);

struct LossWeights {
    double clip = 1.0, label = 1.0, mask = 5.0, bbox = 1.0;
};

struct LossBreakdown {
    Tensor total;  // scalar graph tensor (backward through this)
    double clip = 0.0, label = 0.0, mask = 0.0, bbox = 0.0;  // unweighted components
};

// Per layer: Hungarian matching on the weighted pair costs (no gradients),
// then the same weighted losses on the matched pairs, averaged over layers
// when deep supervision is on (otherwise final layer only). The contrastive
// term uses the final layer's matched masks and is added once. refiner may
// be null; img is only read when it is not.
LossBreakdown total_loss(const std::vector<Prediction>& preds, const Targets& tg,
                         const LossWeights& w, bool deep_supervision,
                         const ClipRefiner* refiner, const Tensor& img);

}  // namespace focus
