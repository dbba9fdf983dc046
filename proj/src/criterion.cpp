#include "focus/criterion.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace focus {

Targets build_targets(const Tensor& gt, long h4, long w4) {
    if (!gt.defined() || gt.rank() != 2)
        throw std::invalid_argument("build_targets: expected [H,W] binary mask");
    long H = gt.dim(0), W = gt.dim(1);
    if (H % h4 != 0 || W % w4 != 0)
        throw std::invalid_argument("build_targets: grid must divide the mask size");
    long fy = H / h4, fx = W / w4;

    Targets tg;
    tg.masks = make_tensor({2, h4, w4}, DType::F64);
    for (long y = 0; y < h4; ++y)
        for (long x = 0; x < w4; ++x) {
            double s = 0.0;
            for (long dy = 0; dy < fy; ++dy)
                for (long dx = 0; dx < fx; ++dx) s += gt.values()[(y * fy + dy) * W + x * fx + dx];
            bool fg = s / (fy * fx) > 0.5;
            tg.masks.raw()[y * w4 + x] = fg ? 1.0 : 0.0;
            tg.masks.raw()[h4 * w4 + y * w4 + x] = fg ? 0.0 : 1.0;
        }

    tg.boxes = make_tensor({2, 4}, DType::F64);
    for (int row = 0; row < 2; ++row) {
        long x1 = W, y1 = H, x2 = -1, y2 = -1;
        for (long y = 0; y < H; ++y)
            for (long x = 0; x < W; ++x) {
                bool on = gt.values()[y * W + x] > 0.5;
                if (row == 1) on = !on;
                if (!on) continue;
                x1 = std::min(x1, x);
                y1 = std::min(y1, y);
                x2 = std::max(x2, x);
                y2 = std::max(y2, y);
            }
        double* b = tg.boxes.raw().data() + row * 4;
        if (x2 < 0) {  // empty class: degenerate zero box
            b[0] = b[1] = b[2] = b[3] = 0.0;
        } else {
            b[0] = (x1 + x2 + 1) * 0.5 / W;
            b[1] = (y1 + y2 + 1) * 0.5 / H;
            b[2] = static_cast<double>(x2 - x1 + 1) / W;
            b[3] = static_cast<double>(y2 - y1 + 1) / H;
        }
    }
    return tg;
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& target) {
    // -[t log s(x) + (1-t) log(1-s(x))] == softplus(x) - x*t
    return mean(sub(softplus(logits), mul(logits, target)));
}

Tensor dice_loss(const Tensor& logits, const Tensor& target) {
    Tensor p = sigmoid(logits);
    Tensor one = Tensor::scalar(1.0);
    Tensor num = add(mul(Tensor::scalar(2.0), sum(mul(p, target))), one);
    Tensor den = add(add(sum(p), sum(target)), one);
    return sub(one, div(num, den));
}

Tensor mask_loss(const Tensor& logits, const Tensor& target) {
    return add(bce_with_logits(logits, target), dice_loss(logits, target));
}

Tensor label_loss(const Tensor& class_logits_row, long label) {
    if (class_logits_row.numel() != 2)
        throw std::invalid_argument("label_loss: expected 2 logits");
    Tensor flat = reshape(class_logits_row, {2});
    Tensor zy = slice(flat, 0, label, 1);
    Tensor zo = slice(flat, 0, 1 - label, 1);
    return reshape(softplus(sub(zo, zy)), {});
}

Tensor giou_cxcywh(const Tensor& a, const Tensor& b) {
    Tensor half = Tensor::scalar(0.5);
    Tensor eps = Tensor::scalar(1e-7);
    auto corners = [&](const Tensor& t, Tensor& x1, Tensor& y1, Tensor& x2, Tensor& y2) {
        Tensor f = reshape(t, {4});
        Tensor cx = slice(f, 0, 0, 1), cy = slice(f, 0, 1, 1);
        Tensor w = slice(f, 0, 2, 1), h = slice(f, 0, 3, 1);
        x1 = sub(cx, mul(w, half));
        x2 = add(cx, mul(w, half));
        y1 = sub(cy, mul(h, half));
        y2 = add(cy, mul(h, half));
    };
    Tensor ax1, ay1, ax2, ay2, bx1, by1, bx2, by2;
    corners(a, ax1, ay1, ax2, ay2);
    corners(b, bx1, by1, bx2, by2);

    Tensor zero = Tensor::scalar(0.0);
    Tensor iw = maximum(sub(minimum(ax2, bx2), maximum(ax1, bx1)), zero);
    Tensor ih = maximum(sub(minimum(ay2, by2), maximum(ay1, by1)), zero);
    Tensor inter = mul(iw, ih);
    Tensor area_a = mul(sub(ax2, ax1), sub(ay2, ay1));
    Tensor area_b = mul(sub(bx2, bx1), sub(by2, by1));
    Tensor uni = sub(add(area_a, area_b), inter);
    Tensor iou = div(inter, add(uni, eps));
    Tensor hw = sub(maximum(ax2, bx2), minimum(ax1, bx1));
    Tensor hh = sub(maximum(ay2, by2), minimum(ay1, by1));
    Tensor hull = mul(hw, hh);
    Tensor g = sub(iou, div(sub(hull, uni), add(hull, eps)));
    return reshape(g, {});
}

Tensor bbox_loss(const Tensor& pred_box, const Tensor& target_box) {
    Tensor l1 = mean(abs(sub(reshape(pred_box, {4}), reshape(target_box, {4}))));
    Tensor g = giou_cxcywh(pred_box, target_box);
    return add(mul(Tensor::scalar(5.0), l1),
               mul(Tensor::scalar(2.0), sub(Tensor::scalar(1.0), g)));
}

std::vector<int> hungarian(const std::vector<double>& cost, int n) {
    if (n <= 0 || static_cast<int>(cost.size()) != n * n)
        throw std::invalid_argument("hungarian: cost must be n*n");
    // shortest augmenting path with potentials, 1-indexed internals
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, false);
        do {
            used[j0] = true;
            int i0 = p[j0], j1 = 0;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> match(n, -1);
    for (int j = 1; j <= n; ++j)
        if (p[j] > 0) match[p[j] - 1] = j - 1;
    return match;
}

namespace {

struct LayerTerms {
    Tensor label, mask, bbox;  // scalar graph tensors, already averaged over queries
};

LayerTerms matched_layer_loss(const Prediction& pr, const Targets& tg, const LossWeights& w) {
    // matching costs use the same weighted terms, evaluated without gradients
    std::vector<double> cost(4);
    {
        NoGrad ng;
        for (int q = 0; q < 2; ++q)
            for (int t = 0; t < 2; ++t) {
                Tensor ml = slice(pr.mask_logits, 0, q, 1);
                Tensor mt = slice(tg.masks, 0, t, 1);
                double c = w.label * label_loss(slice(pr.class_logits, 0, q, 1), t).item() +
                           w.mask * mask_loss(ml, mt).item() +
                           w.bbox * bbox_loss(slice(pr.boxes, 0, q, 1),
                                              slice(tg.boxes, 0, t, 1)).item();
                cost[q * 2 + t] = c;
            }
    }
    std::vector<int> match = hungarian(cost, 2);

    LayerTerms lt;
    Tensor half = Tensor::scalar(0.5);
    for (int q = 0; q < 2; ++q) {
        int t = match[q];
        Tensor lab = label_loss(slice(pr.class_logits, 0, q, 1), t);
        Tensor msk = mask_loss(slice(pr.mask_logits, 0, q, 1), slice(tg.masks, 0, t, 1));
        Tensor box = bbox_loss(slice(pr.boxes, 0, q, 1), slice(tg.boxes, 0, t, 1));
        lt.label = lt.label.defined() ? add(lt.label, lab) : lab;
        lt.mask = lt.mask.defined() ? add(lt.mask, msk) : msk;
        lt.bbox = lt.bbox.defined() ? add(lt.bbox, box) : box;
    }
    lt.label = mul(lt.label, half);
    lt.mask = mul(lt.mask, half);
    lt.bbox = mul(lt.bbox, half);
    return lt;
}

}  // namespace

LossBreakdown total_loss(const std::vector<Prediction>& preds, const Targets& tg,
                         const LossWeights& w, bool deep_supervision, const ClipRefiner* refiner,
                         const Tensor& img) {
    if (preds.empty()) throw std::invalid_argument("total_loss: no predictions");

    std::vector<size_t> layers;
    if (deep_supervision)
        for (size_t i = 0; i < preds.size(); ++i) layers.push_back(i);
    else
        layers.push_back(preds.size() - 1);

    Tensor label, mask, bbox;
    for (size_t i : layers) {
        LayerTerms lt = matched_layer_loss(preds[i], tg, w);
        label = label.defined() ? add(label, lt.label) : lt.label;
        mask = mask.defined() ? add(mask, lt.mask) : lt.mask;
        bbox = bbox.defined() ? add(bbox, lt.bbox) : lt.bbox;
    }
    Tensor inv = Tensor::scalar(1.0 / static_cast<double>(layers.size()));
    label = mul(label, inv);
    mask = mul(mask, inv);
    bbox = mul(bbox, inv);

    LossBreakdown out;
    out.label = label.item();
    out.mask = mask.item();
    out.bbox = bbox.item();
    out.total = add(add(mul(Tensor::scalar(w.label), label), mul(Tensor::scalar(w.mask), mask)),
                    mul(Tensor::scalar(w.bbox), bbox));

    if (refiner) {
        // contrastive refinement on the final layer, with roles taken from
        // that layer's assignment
        const Prediction& fin = preds.back();
        std::vector<double> cost(4);
        {
            NoGrad ng;
            for (int q = 0; q < 2; ++q)
                for (int t = 0; t < 2; ++t)
                    cost[q * 2 + t] =
                        w.label * label_loss(slice(fin.class_logits, 0, q, 1), t).item() +
                        w.mask * mask_loss(slice(fin.mask_logits, 0, q, 1),
                                           slice(tg.masks, 0, t, 1)).item() +
                        w.bbox * bbox_loss(slice(fin.boxes, 0, q, 1),
                                           slice(tg.boxes, 0, t, 1)).item();
        }
        std::vector<int> match = hungarian(cost, 2);
        int qf = match[0] == 0 ? 0 : 1;  // query assigned to the foreground target
        long h4 = fin.mask_logits.dim(1), w4 = fin.mask_logits.dim(2);
        Tensor fg = reshape(slice(fin.mask_logits, 0, qf, 1), {h4, w4});
        Tensor bg = reshape(slice(fin.mask_logits, 0, 1 - qf, 1), {h4, w4});
        Tensor clip = refiner->loss(img, fg, bg);
        out.clip = clip.item();
        out.total = add(out.total, mul(Tensor::scalar(w.clip), clip));
    }
    return out;
}

}  // namespace focus
