#pragma once

#include <map>
#include <string>
#include <vector>

#include "focus/nn.hpp"
#include "focus/serialize.hpp"

namespace focus {

// AdamW over every trainable parameter of a store. Weight decay is decoupled
// (applied to the value, not the moment estimates); a missing gradient
// counts as zero so the moments still decay.
class AdamW {
public:
    AdamW(ParamStore& ps, double lr, double weight_decay, double grad_clip);

    // scales all gradients to the configured global L2 max-norm (no-op when
    // disabled or already inside); returns the pre-clip norm
    double clip_gradients();

    void step();

    long t() const { return t_; }

    // moments travel inside checkpoints as optimizer.m.<param>/optimizer.v.<param>
    void save(Archive& ar) const;
    void load(const Archive& ar);

private:
    ParamStore& ps_;
    double lr_, wd_, clip_;
    long t_ = 0;
    std::map<std::string, std::vector<double>> m_, v_;
};

}  // namespace focus
