#include "focus/nn.hpp"

#include <cmath>
#include <stdexcept>

#include "focus/rng.hpp"

namespace focus {

namespace {

// fan counts follow the usual conventions: [in,out] matrices and
// [Co,Ci,kh,kw] convolution kernels
void fans(const Shape& s, double& fan_in, double& fan_out) {
    if (s.size() == 2) {
        fan_in = static_cast<double>(s[0]);
        fan_out = static_cast<double>(s[1]);
    } else if (s.size() == 4) {
        fan_in = static_cast<double>(s[1] * s[2] * s[3]);
        fan_out = static_cast<double>(s[0] * s[2] * s[3]);
    } else {
        fan_in = fan_out = static_cast<double>(s.empty() ? 1 : s.back());
    }
}

}  // namespace

Tensor ParamStore::get(const std::string& name, const Shape& shape, Init init,
                       bool trainable) {
    auto it = params_.find(name);
    if (it != params_.end()) {
        if (it->second.shape() != shape)
            throw std::invalid_argument("ParamStore::get: " + name + " registered as " +
                                        shape_str(it->second.shape()) + ", requested " +
                                        shape_str(shape));
        return it->second;
    }
    Tensor t = make_tensor(shape, DType::F64);
    Rng rng = named_stream(seed_, name);
    switch (init) {
        case Init::Zeros:
            break;
        case Init::Ones:
            std::fill(t.raw().begin(), t.raw().end(), 1.0);
            break;
        case Init::Xavier: {
            double fi, fo;
            fans(shape, fi, fo);
            double a = std::sqrt(6.0 / (fi + fo));
            for (double& v : t.raw()) v = rng.uniform(-a, a);
            break;
        }
        case Init::Kaiming: {
            double fi, fo;
            fans(shape, fi, fo);
            double a = std::sqrt(6.0 / fi);
            for (double& v : t.raw()) v = rng.uniform(-a, a);
            break;
        }
        case Init::Normal02:
            for (double& v : t.raw()) v = 0.02 * rng.normal();
            break;
    }
    t.set_requires_grad(trainable);
    params_.emplace(name, t);
    return t;
}

long ParamStore::total_parameters() const {
    long n = 0;
    for (const auto& [k, v] : params_) n += v.numel();
    return n;
}

void ParamStore::load(const std::map<std::string, Tensor>& src) {
    for (auto& [name, t] : params_) {
        auto it = src.find(name);
        if (it == src.end())
            throw std::runtime_error("ParamStore::load: missing parameter " + name);
        if (it->second.shape() != t.shape())
            throw std::runtime_error("ParamStore::load: shape mismatch for " + name + ": have " +
                                     shape_str(t.shape()) + ", file has " +
                                     shape_str(it->second.shape()));
        t.raw() = it->second.values();
    }
    for (const auto& [name, t] : src)
        if (!params_.count(name))
            throw std::runtime_error("ParamStore::load: unknown parameter in file: " + name);
}

Tensor Linear::apply(const Tensor& x) const {
    Tensor y = matmul(x, w);
    return b.defined() ? add(y, b) : y;
}

Linear make_linear(ParamStore& ps, const std::string& name, long in, long out, bool bias,
                   Init init) {
    Linear l;
    l.w = ps.get(name + ".w", {in, out}, init);
    if (bias) l.b = ps.get(name + ".b", {out}, Init::Zeros);
    return l;
}

Tensor Conv2dLayer::apply(const Tensor& x) const { return conv2d(x, w, b, stride, pad); }

Conv2dLayer make_conv2d(ParamStore& ps, const std::string& name, long ci, long co, long k,
                        long stride, long pad, bool bias, Init init) {
    Conv2dLayer c;
    c.w = ps.get(name + ".w", {co, ci, k, k}, init);
    if (bias) c.b = ps.get(name + ".b", {co}, Init::Zeros);
    c.stride = stride;
    c.pad = pad;
    return c;
}

Tensor GroupNormLayer::apply(const Tensor& x) const {
    if (x.rank() != 3)
        throw std::invalid_argument("GroupNorm: expected [C,H,W], got " + shape_str(x.shape()));
    long C = x.dim(0), H = x.dim(1), W = x.dim(2);
    if (C % groups != 0) throw std::invalid_argument("GroupNorm: channels not divisible");
    Tensor g = reshape(x, {groups, (C / groups) * H * W});
    g = layer_norm(g);
    g = reshape(g, {C, H, W});
    return add(mul(g, gamma), beta);
}

GroupNormLayer make_group_norm(ParamStore& ps, const std::string& name, long channels,
                               long groups) {
    GroupNormLayer g;
    g.gamma = ps.get(name + ".gamma", {channels, 1, 1}, Init::Ones);
    g.beta = ps.get(name + ".beta", {channels, 1, 1}, Init::Zeros);
    g.groups = groups;
    return g;
}

Tensor LayerNormLayer::apply(const Tensor& x) const {
    return add(mul(layer_norm(x), gamma), beta);
}

LayerNormLayer make_layer_norm(ParamStore& ps, const std::string& name, long dim) {
    LayerNormLayer l;
    l.gamma = ps.get(name + ".gamma", {dim}, Init::Ones);
    l.beta = ps.get(name + ".beta", {dim}, Init::Zeros);
    return l;
}

Tensor Mlp::apply(const Tensor& x) const { return fc2.apply(gelu(fc1.apply(x))); }

Mlp make_mlp(ParamStore& ps, const std::string& name, long dim, long hidden, long out) {
    Mlp m;
    m.fc1 = make_linear(ps, name + ".fc1", dim, hidden);
    m.fc2 = make_linear(ps, name + ".fc2", hidden, out);
    return m;
}

Tensor MultiheadAttention::apply(const Tensor& query, const Tensor& key, const Tensor& value,
                                 const Tensor& mask) const {
    long D = q.w.dim(1);
    if (D % heads != 0)
        throw std::invalid_argument("MultiheadAttention: dim not divisible by heads");
    long dh = D / heads;
    Tensor Q = q.apply(query), K = k.apply(key), V = v.apply(value);
    Tensor scale = Tensor::scalar(1.0 / std::sqrt(static_cast<double>(dh)));
    std::vector<Tensor> outs;
    outs.reserve(heads);
    for (long h = 0; h < heads; ++h) {
        Tensor Qh = slice(Q, 1, h * dh, dh);
        Tensor Kh = slice(K, 1, h * dh, dh);
        Tensor Vh = slice(V, 1, h * dh, dh);
        Tensor scores = mul(matmul(Qh, transpose(Kh)), scale);
        Tensor att = mask.defined() ? softmax_masked(scores, mask) : softmax(scores);
        outs.push_back(matmul(att, Vh));
    }
    return o.apply(concat(outs, 1));
}

MultiheadAttention make_mha(ParamStore& ps, const std::string& name, long dim, long heads) {
    MultiheadAttention m;
    m.q = make_linear(ps, name + ".q", dim, dim);
    m.k = make_linear(ps, name + ".k", dim, dim);
    m.v = make_linear(ps, name + ".v", dim, dim);
    m.o = make_linear(ps, name + ".o", dim, dim);
    m.heads = heads;
    return m;
}

}  // namespace focus
