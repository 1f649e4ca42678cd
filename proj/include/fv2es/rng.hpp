// Copyright (c) 2026 the fv2es authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "fv2es/tensor.hpp"

namespace fv2es {

// Deterministic RNG. mt19937_64 output is fixed by the standard and the
// Box-Muller transform below avoids the implementation-defined std
// distributions, so seeded streams replay identically everywhere.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    size_t index(size_t n) { return static_cast<size_t>(uniform() * static_cast<double>(n)) % n; }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    template <typename T>
    Tensor<T> normal_tensor(std::vector<size_t> shape, double stddev, double mean = 0.0) {
        Tensor<T> t(std::move(shape));
        for (auto& v : t.vec()) v = static_cast<T>(mean + stddev * normal());
        return t;
    }

    template <typename T>
    Tensor<T> uniform_tensor(std::vector<size_t> shape, double lo, double hi) {
        Tensor<T> t(std::move(shape));
        for (auto& v : t.vec()) v = static_cast<T>(uniform(lo, hi));
        return t;
    }

private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace fv2es
