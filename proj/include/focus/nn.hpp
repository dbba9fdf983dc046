#pragma once

#include <map>
#include <string>

#include "focus/tensor.hpp"

namespace focus {

enum class Init { Zeros, Ones, Xavier, Kaiming, Normal02 };

// Name-keyed parameter registry. Each tensor is initialized from an RNG
// stream derived from (seed, name), so values do not depend on construction
// order. get() creates on first use and verifies the shape afterwards.
class ParamStore {
public:
    explicit ParamStore(uint64_t seed) : seed_(seed) {}

    Tensor get(const std::string& name, const Shape& shape, Init init, bool trainable = true);
    bool has(const std::string& name) const { return params_.count(name) != 0; }
    const std::map<std::string, Tensor>& all() const { return params_; }
    long total_parameters() const;
    uint64_t seed() const { return seed_; }

    // copy values into existing parameters by name; throws on any mismatch
    void load(const std::map<std::string, Tensor>& src);

private:
    uint64_t seed_;
    std::map<std::string, Tensor> params_;
};

struct Linear {
    Tensor w;  // [in, out]
    Tensor b;  // [out] or undefined
    Tensor apply(const Tensor& x) const;  // [N,in] -> [N,out]
};
Linear make_linear(ParamStore& ps, const std::string& name, long in, long out, bool bias = true,
                   Init init = Init::Xavier);

struct Conv2dLayer {
    Tensor w;  // [Co,Ci,k,k]
    Tensor b;  // [Co] or undefined
    long stride = 1, pad = 0;
    Tensor apply(const Tensor& x) const;  // [Ci,H,W] -> [Co,oh,ow]
};
Conv2dLayer make_conv2d(ParamStore& ps, const std::string& name, long ci, long co, long k,
                        long stride, long pad, bool bias = true, Init init = Init::Kaiming);

// normalizes over (C/groups, H, W) blocks, then per-channel affine
struct GroupNormLayer {
    Tensor gamma, beta;  // [C,1,1]
    long groups = 1;
    Tensor apply(const Tensor& x) const;  // [C,H,W]
};
GroupNormLayer make_group_norm(ParamStore& ps, const std::string& name, long channels,
                               long groups);

// last-axis layer norm with learned affine
struct LayerNormLayer {
    Tensor gamma, beta;  // [D]
    Tensor apply(const Tensor& x) const;
};
LayerNormLayer make_layer_norm(ParamStore& ps, const std::string& name, long dim);

struct Mlp {
    Linear fc1, fc2;
    Tensor apply(const Tensor& x) const;  // fc1 -> gelu -> fc2
};
Mlp make_mlp(ParamStore& ps, const std::string& name, long dim, long hidden, long out);

// standard multi-head attention with scores scaled by 1/sqrt(head_dim);
// mask, when defined, is added to the scores of every head ([Nq,Nk],
// 0 = visible, -inf = hidden)
struct MultiheadAttention {
    Linear q, k, v, o;
    long heads = 1;
    Tensor apply(const Tensor& query, const Tensor& key, const Tensor& value,
                 const Tensor& mask = Tensor()) const;
};
MultiheadAttention make_mha(ParamStore& ps, const std::string& name, long dim, long heads);

}  // namespace focus
