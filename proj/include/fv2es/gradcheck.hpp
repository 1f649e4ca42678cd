// Copyright (c) 2026 the fv2es authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fv2es/graph.hpp"

namespace fv2es {

struct GradCheckReport {
    std::string name;
    double max_rel_error = 0.0;
    bool pass = false;
};

// Builds a scalar loss from already-created input leaves. Called repeatedly
// with perturbed inputs, so it must be a pure function of the leaf values.
using LossBuilder =
    std::function<Graph<double>::NodeId(Graph<double>&, const std::vector<Graph<double>::NodeId>&)>;

// Central finite differences in f64. Relative error uses a small denominator
// floor so that difference noise on near-zero gradients does not register as
// failure; genuine gradient bugs sit orders of magnitude above it.
inline GradCheckReport gradcheck(const std::string& name, const LossBuilder& build, const std::vector<TensorD>& inputs,
                                 double h = 1e-5, double tol = 1e-3) {
    GradCheckReport report;
    report.name = name;

    auto run = [&](const std::vector<TensorD>& values, std::vector<TensorD>* grads_out) {
        Graph<double> g;
        std::vector<Graph<double>::NodeId> ids;
        ids.reserve(values.size());
        for (const auto& t : values) ids.push_back(g.leaf(t, true));
        const auto loss = build(g, ids);
        const double loss_value = g.value(loss)[0];
        if (grads_out) {
            g.backward(loss);
            grads_out->clear();
            for (auto id : ids) grads_out->push_back(g.grad(id));
        }
        return loss_value;
    };

    std::vector<TensorD> analytic;
    run(inputs, &analytic);

    for (size_t ti = 0; ti < inputs.size(); ++ti) {
        for (size_t j = 0; j < inputs[ti].numel(); ++j) {
            std::vector<TensorD> probe = inputs;
            probe[ti][j] += h;
            const double up = run(probe, nullptr);
            probe[ti][j] -= 2.0 * h;
            const double down = run(probe, nullptr);
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[ti][j];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-4});
            report.max_rel_error = std::max(report.max_rel_error, std::abs(a - numeric) / denom);
        }
    }
    report.pass = report.max_rel_error < tol;
    return report;
}

}  // namespace fv2es
