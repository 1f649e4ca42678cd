// Copyright (c) 2026 the fv2es authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "fv2es/tensor.hpp"

namespace fv2es {

// Standard Adam with bias correction. Moment tensors are kept parallel to
// the parameter list handed to each step.
template <typename T>
struct AdamState {
    std::vector<Tensor<T>> m, v;
    int64_t t = 0;
    T lr = static_cast<T>(1e-3);
    T beta1 = static_cast<T>(0.9);
    T beta2 = static_cast<T>(0.999);
    T eps = static_cast<T>(1e-8);
};

template <typename T>
void adam_step(AdamState<T>& state, const std::vector<Tensor<T>*>& params, const std::vector<const Tensor<T>*>& grads) {
    if (params.size() != grads.size()) throw DimensionMismatch("adam params vs grads count");
    if (state.m.empty()) {
        for (const Tensor<T>* p : params) {
            state.m.emplace_back(p->shape());
            state.v.emplace_back(p->shape());
        }
    }
    if (state.m.size() != params.size()) throw DimensionMismatch("adam state size vs params count");
    state.t += 1;
    const T bc1 = T(1) - std::pow(state.beta1, static_cast<T>(state.t));
    const T bc2 = T(1) - std::pow(state.beta2, static_cast<T>(state.t));
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor<T>& p = *params[i];
        const Tensor<T>& g = *grads[i];
        if (!p.same_shape(g) || !p.same_shape(state.m[i]))
            throw DimensionMismatch("adam parameter/gradient shape mismatch");
        Tensor<T>& m = state.m[i];
        Tensor<T>& v = state.v[i];
        for (size_t j = 0; j < p.numel(); ++j) {
            m[j] = state.beta1 * m[j] + (T(1) - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (T(1) - state.beta2) * g[j] * g[j];
            const T mhat = m[j] / bc1;
            const T vhat = v[j] / bc2;
            p[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

}  // namespace fv2es
