#pragma once

// Adam with bias correction:
//   m = b1*m + (1-b1)*g,  v = b2*v + (1-b2)*g^2
//   p -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "edrain/tensor.hpp"

namespace edrain {

template <typename T>
struct AdamConfig {
    T lr = T(1e-3);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
};

template <typename T>
struct AdamState {
    std::uint64_t step = 0;
    std::vector<Tensor<T>> m, v; // first and second moments, parallel to the param list
};

template <typename T>
AdamState<T> adam_init(const std::vector<Tensor<T>*>& params) {
    AdamState<T> s;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const auto* p : params) {
        s.m.emplace_back(p->shape());
        s.v.emplace_back(p->shape());
    }
    return s;
}

template <typename T>
void adam_step(const std::vector<Tensor<T>*>& params,
               const std::vector<const Tensor<T>*>& grads, AdamState<T>& state,
               const AdamConfig<T>& cfg) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw std::invalid_argument("adam_step: params/grads/state count mismatch");
    state.step += 1;
    const T bc1 = T(1) - std::pow(cfg.beta1, static_cast<T>(state.step));
    const T bc2 = T(1) - std::pow(cfg.beta2, static_cast<T>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor<T>& p = *params[i];
        const Tensor<T>& g = *grads[i];
        Tensor<T>& m = state.m[i];
        Tensor<T>& v = state.v[i];
        if (!p.same_shape(g) || !p.same_shape(m))
            throw std::invalid_argument("adam_step: shape mismatch at param " +
                                        std::to_string(i) + ": " + p.shape_str() + " vs " +
                                        g.shape_str());
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = cfg.beta1 * m[j] + (T(1) - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (T(1) - cfg.beta2) * g[j] * g[j];
            const T mhat = m[j] / bc1;
            const T vhat = v[j] / bc2;
            p[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

} // namespace edrain
