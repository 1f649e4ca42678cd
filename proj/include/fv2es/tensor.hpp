// Copyright (c) 2026 the fv2es authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "fv2es/errors.hpp"

namespace fv2es {

enum class DType : uint8_t { F32 = 0, F64 = 1 };

template <typename T>
constexpr DType dtype_of() {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>, "only f32/f64 tensors");
    return std::is_same_v<T, float> ? DType::F32 : DType::F64;
}

inline std::string shape_str(const std::vector<size_t>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

inline size_t checked_numel(const std::vector<size_t>& shape) {
    size_t n = 1;
    for (size_t d : shape) {
        if (d == 0) throw BadShape("zero dimension in " + shape_str(shape));
        if (d > std::numeric_limits<size_t>::max() / n) throw BadShape("shape overflow");
        n *= d;
    }
    return n;
}

// Dense row-major n-dimensional array. The universal value carrier: vectors
// are rank-1, matrices rank-2, feature maps rank-3 (C x H x W).
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<size_t> shape) : shape_(std::move(shape)), data_(checked_numel(shape_), T(0)) {}

    Tensor(std::vector<size_t> shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (checked_numel(shape_) != data_.size())
            throw BadShape("shape " + shape_str(shape_) + " does not match " + std::to_string(data_.size()) + " values");
    }

    static Tensor full(std::vector<size_t> shape, T value) {
        Tensor t(std::move(shape));
        for (auto& v : t.data_) v = value;
        return t;
    }

    static Tensor scalar(T value) { return Tensor({1}, {value}); }

    const std::vector<size_t>& shape() const { return shape_; }
    size_t rank() const { return shape_.size(); }
    size_t dim(size_t i) const { return shape_.at(i); }
    size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](size_t i) { return data_[i]; }
    const T& operator[](size_t i) const { return data_[i]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    // 2-D accessors (rows x cols), used heavily by token matrices.
    size_t rows() const { return rank() == 2 ? shape_[0] : throw_rank2(); }
    size_t cols() const { return rank() == 2 ? shape_[1] : throw_rank2(); }
    T& at2(size_t r, size_t c) { return data_[r * shape_[1] + c]; }
    const T& at2(size_t r, size_t c) const { return data_[r * shape_[1] + c]; }

    // 3-D accessors (C x H x W).
    T& at3(size_t c, size_t y, size_t x) { return data_[(c * shape_[1] + y) * shape_[2] + x]; }
    const T& at3(size_t c, size_t y, size_t x) const { return data_[(c * shape_[1] + y) * shape_[2] + x]; }

    Tensor reshaped(std::vector<size_t> new_shape) const {
        if (checked_numel(new_shape) != numel())
            throw BadShape("reshape " + shape_str(shape_) + " -> " + shape_str(new_shape));
        return Tensor(std::move(new_shape), data_);
    }

private:
    size_t throw_rank2() const { throw BadShape("expected rank-2 tensor, got " + shape_str(shape_)); }

    std::vector<size_t> shape_;
    std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// No NaN/Inf escapes: every op output passes through this gate.
template <typename T>
const Tensor<T>& ensure_finite(const Tensor<T>& t, const char* what) {
    for (const T& v : t.vec())
        if (!std::isfinite(v)) throw NonFinite(std::string(what) + " produced a non-finite value");
    return t;
}

}  // namespace fv2es
