#include "focus/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace focus {

AdamW::AdamW(ParamStore& ps, double lr, double weight_decay, double grad_clip)
    : ps_(ps), lr_(lr), wd_(weight_decay), clip_(grad_clip) {
    for (const auto& [name, t] : ps_.all()) {
        if (!t.requires_grad()) continue;
        m_[name].assign(t.numel(), 0.0);
        v_[name].assign(t.numel(), 0.0);
    }
}

double AdamW::clip_gradients() {
    double sq = 0.0;
    for (const auto& [name, t] : ps_.all()) {
        if (!t.requires_grad() || !t.has_grad()) continue;
        for (double g : t.grad()) sq += g * g;
    }
    double norm = std::sqrt(sq);
    if (clip_ > 0.0 && norm > clip_) {
        double scale = clip_ / norm;
        for (const auto& [name, t] : ps_.all()) {
            if (!t.requires_grad() || !t.has_grad()) continue;
            for (double& g : t.ensure_grad()) g *= scale;
        }
    }
    return norm;
}

void AdamW::step() {
    ++t_;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (auto& [name, t] : ps_.all()) {
        if (!t.requires_grad()) continue;
        std::vector<double>& m = m_[name];
        std::vector<double>& v = v_[name];
        const std::vector<double>* grad = t.has_grad() ? &t.grad() : nullptr;
        // values() is shared storage; the registry owns these tensors
        std::vector<double>& val = const_cast<Tensor&>(t).raw();
        for (long i = 0; i < t.numel(); ++i) {
            double g = grad ? (*grad)[i] : 0.0;
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            double mh = m[i] / bc1, vh = v[i] / bc2;
            val[i] -= lr_ * (mh / (std::sqrt(vh) + eps) + wd_ * val[i]);
        }
    }
}

void AdamW::save(Archive& ar) const {
    for (const auto& [name, m] : m_) {
        const auto& v = v_.at(name);
        Shape shape = ps_.all().at(name).shape();
        ar.tensors["optimizer.m." + name] = Tensor::from(shape, m);
        ar.tensors["optimizer.v." + name] = Tensor::from(shape, v);
    }
    ar.tensors["optimizer.t"] = Tensor::scalar(static_cast<double>(t_));
}

void AdamW::load(const Archive& ar) {
    for (auto& [name, m] : m_) {
        auto im = ar.tensors.find("optimizer.m." + name);
        auto iv = ar.tensors.find("optimizer.v." + name);
        if (im == ar.tensors.end() || iv == ar.tensors.end())
            throw std::runtime_error("optimizer state missing for parameter " + name);
        if (im->second.numel() != static_cast<long>(m.size()))
            throw std::runtime_error("optimizer state size mismatch for " + name);
        m = im->second.values();
        v_[name] = iv->second.values();
    }
    auto it = ar.tensors.find("optimizer.t");
    if (it == ar.tensors.end()) throw std::runtime_error("optimizer step count missing");
    t_ = static_cast<long>(it->second.item());
}

}  // namespace focus
