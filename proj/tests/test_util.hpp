#pragma once

#include <vector>

#include "focus/rng.hpp"
#include "focus/tensor.hpp"

namespace focus::testutil {

inline Tensor randt(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t = make_tensor(shape, DType::F64);
    for (double& v : t.raw()) v = rng.uniform(lo, hi);
    return t;
}

// random positive weights used to reduce an op output to a scalar so the
// finite-difference probe exercises the whole Jacobian
inline Tensor rand_weights(const Shape& shape, Rng& rng) {
    Tensor t = make_tensor(shape, DType::F64);
    for (double& v : t.raw()) v = rng.uniform(0.25, 1.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    return t;
}

inline Tensor weighted_sum(const Tensor& y, const Tensor& w) { return sum(mul(y, w)); }

}  // namespace focus::testutil
