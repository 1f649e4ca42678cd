// Copyright (c) 2026 the fv2es authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "fv2es/tensor.hpp"

namespace fv2es {

// All ops are pure functions with fixed loop nesting, so repeated evaluation
// on identical inputs is bit-identical.

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) throw DimensionMismatch("add " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor<T> out(a.shape());
    for (size_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
    ensure_finite(out, "add");
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) throw DimensionMismatch("mul " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor<T> out(a.shape());
    for (size_t i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
    ensure_finite(out, "mul");
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
    Tensor<T> out(a.shape());
    for (size_t i = 0; i < a.numel(); ++i) out[i] = a[i] * s;
    ensure_finite(out, "scale");
    return out;
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& a) {
    if (a.rank() != 2) throw DimensionMismatch("transpose expects rank-2, got " + shape_str(a.shape()));
    Tensor<T> out({a.dim(1), a.dim(0)});
    for (size_t r = 0; r < a.dim(0); ++r)
        for (size_t c = 0; c < a.dim(1); ++c) out.at2(c, r) = a.at2(r, c);
    return out;
}

// Standard matrix product, left-to-right summation over k.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw DimensionMismatch("matmul expects rank-2 operands");
    if (a.dim(1) != b.dim(0))
        throw DimensionMismatch("matmul inner dims " + std::to_string(a.dim(1)) + " vs " + std::to_string(b.dim(0)));
    const size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor<T> out({m, n});
    for (size_t i = 0; i < m; ++i) {
        for (size_t j = 0; j < n; ++j) {
            T acc = 0;
            for (size_t p = 0; p < k; ++p) acc += a.at2(i, p) * b.at2(p, j);
            out.at2(i, j) = acc;
        }
    }
    ensure_finite(out, "matmul");
    return out;
}

inline size_t conv_out_dim(size_t in, size_t k, size_t stride, size_t pad) {
    if (in + 2 * pad < k) throw DimensionMismatch("window larger than padded input");
    return (in + 2 * pad - k) / stride + 1;
}

// 2-D cross-correlation (no kernel flip), zero padding. Input C_in x H x W,
// kernel C_out x C_in x k x k, optional per-output-channel bias.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>* bias, int stride, int pad) {
    if (x.rank() != 3) throw DimensionMismatch("conv2d input must be C x H x W, got " + shape_str(x.shape()));
    if (kernel.rank() != 4) throw DimensionMismatch("conv2d kernel must be rank-4, got " + shape_str(kernel.shape()));
    const size_t c_out = kernel.dim(0), c_in = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
    if (kh != kw || (kh != 1 && kh != 3)) throw DimensionMismatch("conv2d kernel size must be 1 or 3");
    if (c_in != x.dim(0))
        throw DimensionMismatch("conv2d channels: kernel expects " + std::to_string(c_in) + ", input has " +
                                std::to_string(x.dim(0)));
    if (bias && (bias->rank() != 1 || bias->dim(0) != c_out)) throw DimensionMismatch("conv2d bias length");
    if (stride < 1) throw DimensionMismatch("conv2d stride must be >= 1");
    if (pad < 0) throw DimensionMismatch("conv2d pad must be >= 0");

    const size_t h = x.dim(1), w = x.dim(2);
    const size_t oh = conv_out_dim(h, kh, stride, pad);
    const size_t ow = conv_out_dim(w, kw, stride, pad);
    Tensor<T> out({c_out, oh, ow});
    for (size_t co = 0; co < c_out; ++co) {
        const T b = bias ? (*bias)[co] : T(0);
        for (size_t oy = 0; oy < oh; ++oy) {
            for (size_t ox = 0; ox < ow; ++ox) {
                T acc = b;
                for (size_t ci = 0; ci < c_in; ++ci) {
                    for (size_t ky = 0; ky < kh; ++ky) {
                        const long iy = static_cast<long>(oy) * stride + static_cast<long>(ky) - pad;
                        if (iy < 0 || iy >= static_cast<long>(h)) continue;
                        for (size_t kx = 0; kx < kw; ++kx) {
                            const long ix = static_cast<long>(ox) * stride + static_cast<long>(kx) - pad;
                            if (ix < 0 || ix >= static_cast<long>(w)) continue;
                            acc += x.at3(ci, iy, ix) * kernel[((co * c_in + ci) * kh + ky) * kw + kx];
                        }
                    }
                }
                out.at3(co, oy, ox) = acc;
            }
        }
    }
    ensure_finite(out, "conv2d");
    return out;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias, int stride, int pad) {
    return conv2d(x, kernel, &bias, stride, pad);
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, int stride, int pad) {
    return conv2d(x, kernel, static_cast<const Tensor<T>*>(nullptr), stride, pad);
}

// Per-window maximum; padded cells use a -inf sentinel so they never win.
// When argmax is non-null it receives, per output element, the flat input
// index of the winning cell (first scanned wins ties).
template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x, int k, int stride, int pad, std::vector<size_t>* argmax = nullptr) {
    if (x.rank() != 3) throw DimensionMismatch("maxpool2d input must be C x H x W");
    if (k < 1 || stride < 1 || pad < 0) throw DimensionMismatch("maxpool2d window parameters");
    const size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const size_t oh = conv_out_dim(h, k, stride, pad);
    const size_t ow = conv_out_dim(w, k, stride, pad);
    Tensor<T> out({c, oh, ow});
    if (argmax) argmax->assign(out.numel(), 0);
    size_t oi = 0;
    for (size_t ch = 0; ch < c; ++ch) {
        for (size_t oy = 0; oy < oh; ++oy) {
            for (size_t ox = 0; ox < ow; ++ox, ++oi) {
                T best = -std::numeric_limits<T>::infinity();
                size_t best_idx = 0;
                for (int ky = 0; ky < k; ++ky) {
                    const long iy = static_cast<long>(oy) * stride + ky - pad;
                    if (iy < 0 || iy >= static_cast<long>(h)) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        const long ix = static_cast<long>(ox) * stride + kx - pad;
                        if (ix < 0 || ix >= static_cast<long>(w)) continue;
                        const T v = x.at3(ch, iy, ix);
                        if (v > best) {
                            best = v;
                            best_idx = (ch * h + iy) * w + ix;
                        }
                    }
                }
                if (best == -std::numeric_limits<T>::infinity())
                    throw DimensionMismatch("maxpool2d window contains no input cell");
                out.at3(ch, oy, ox) = best;
                if (argmax) (*argmax)[oi] = best_idx;
            }
        }
    }
    ensure_finite(out, "maxpool2d");
    return out;
}

template <typename T>
struct BatchNormParams {
    Tensor<T> gamma, beta, running_mean, running_var;
    T epsilon = static_cast<T>(1e-5);

    static BatchNormParams identity(size_t channels) {
        BatchNormParams p;
        p.gamma = Tensor<T>::full({channels}, T(1));
        p.beta = Tensor<T>({channels});
        p.running_mean = Tensor<T>({channels});
        p.running_var = Tensor<T>::full({channels}, T(1));
        return p;
    }

    size_t channels() const { return gamma.numel(); }

    void validate() const {
        const size_t c = gamma.numel();
        if (beta.numel() != c || running_mean.numel() != c || running_var.numel() != c)
            throw DimensionMismatch("batch norm parameter vectors must share the channel count");
        for (const T& v : running_var.vec())
            if (v < 0) throw BadShape("negative running variance");
        if (epsilon <= 0) throw BadShape("batch norm epsilon must be positive");
    }
};

template <typename T>
Tensor<T> batch_norm_eval(const Tensor<T>& x, const BatchNormParams<T>& p) {
    if (x.rank() != 3) throw DimensionMismatch("batch_norm_eval input must be C x H x W");
    p.validate();
    const size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
    if (c != p.channels()) throw DimensionMismatch("batch_norm_eval channel count");
    Tensor<T> out(x.shape());
    for (size_t ch = 0; ch < c; ++ch) {
        const T inv = T(1) / std::sqrt(p.running_var[ch] + p.epsilon);
        const T g = p.gamma[ch], b = p.beta[ch], m = p.running_mean[ch];
        for (size_t i = 0; i < hw; ++i) {
            const size_t idx = ch * hw + i;
            out[idx] = (x[idx] - m) * inv * g + b;
        }
    }
    ensure_finite(out, "batch_norm_eval");
    return out;
}

template <typename T>
struct LayerNormParams {
    Tensor<T> gamma, beta;
    T epsilon = static_cast<T>(1e-5);

    static LayerNormParams identity(size_t d) {
        LayerNormParams p;
        p.gamma = Tensor<T>::full({d}, T(1));
        p.beta = Tensor<T>({d});
        return p;
    }
};

// Normalize over the trailing dimension with biased variance, then affine.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const LayerNormParams<T>& p) {
    if (x.rank() < 1) throw DimensionMismatch("layer_norm needs at least rank 1");
    const size_t d = x.shape().back();
    if (p.gamma.numel() != d || p.beta.numel() != d)
        throw DimensionMismatch("layer_norm params sized " + std::to_string(p.gamma.numel()) + " for feature dim " +
                                std::to_string(d));
    const size_t rows = x.numel() / d;
    Tensor<T> out(x.shape());
    for (size_t r = 0; r < rows; ++r) {
        const T* row = x.data() + r * d;
        T mean = 0;
        for (size_t j = 0; j < d; ++j) mean += row[j];
        mean /= static_cast<T>(d);
        T var = 0;
        for (size_t j = 0; j < d; ++j) {
            const T c = row[j] - mean;
            var += c * c;
        }
        var /= static_cast<T>(d);
        const T inv = T(1) / std::sqrt(var + p.epsilon);
        for (size_t j = 0; j < d; ++j) out[r * d + j] = (row[j] - mean) * inv * p.gamma[j] + p.beta[j];
    }
    ensure_finite(out, "layer_norm");
    return out;
}

template <typename T>
T gelu_scalar(T v) {
    // Exact erf form: x * Phi(x).
    return v * static_cast<T>(0.5) * (T(1) + std::erf(v / std::sqrt(T(2))));
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    for (size_t i = 0; i < x.numel(); ++i) out[i] = gelu_scalar(x[i]);
    ensure_finite(out, "gelu");
    return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    for (size_t i = 0; i < x.numel(); ++i) out[i] = x[i] > 0 ? x[i] : T(0);
    return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    for (size_t i = 0; i < x.numel(); ++i) out[i] = T(1) / (T(1) + std::exp(-x[i]));
    ensure_finite(out, "sigmoid");
    return out;
}

// Max-subtracted exponential normalization over the trailing dimension.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
    if (x.rank() < 1 || x.shape().back() < 1) throw DimensionMismatch("softmax needs a trailing dimension");
    const size_t d = x.shape().back();
    const size_t rows = x.numel() / d;
    Tensor<T> out(x.shape());
    for (size_t r = 0; r < rows; ++r) {
        const T* row = x.data() + r * d;
        T mx = row[0];
        for (size_t j = 1; j < d; ++j) mx = std::max(mx, row[j]);
        T sum = 0;
        for (size_t j = 0; j < d; ++j) {
            const T e = std::exp(row[j] - mx);
            out[r * d + j] = e;
            sum += e;
        }
        for (size_t j = 0; j < d; ++j) out[r * d + j] /= sum;
    }
    ensure_finite(out, "softmax");
    return out;
}

template <typename T>
struct MhaParams {
    Tensor<T> wq, wk, wv, wo;  // each d x d, bias-free

    void validate(size_t d) const {
        for (const Tensor<T>* w : {&wq, &wk, &wv, &wo})
            if (w->rank() != 2 || w->dim(0) != d || w->dim(1) != d)
                throw DimensionMismatch("attention projection must be " + std::to_string(d) + "x" + std::to_string(d));
    }
};

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, size_t c0, size_t c1) {
    if (x.rank() != 2 || c1 > x.dim(1) || c0 >= c1) throw DimensionMismatch("slice_cols range");
    Tensor<T> out({x.dim(0), c1 - c0});
    for (size_t r = 0; r < x.dim(0); ++r)
        for (size_t c = c0; c < c1; ++c) out.at2(r, c - c0) = x.at2(r, c);
    return out;
}

// Scaled dot-product attention per head, heads concatenated, output
// projection applied. If attn_out is given it receives one row-stochastic
// n x n matrix per head.
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& tokens, const MhaParams<T>& p, int heads,
                               std::vector<Tensor<T>>* attn_out = nullptr) {
    if (tokens.rank() != 2) throw DimensionMismatch("attention tokens must be n x d");
    const size_t n = tokens.dim(0), d = tokens.dim(1);
    if (heads < 1 || d % static_cast<size_t>(heads) != 0)
        throw DimensionMismatch("embedding width " + std::to_string(d) + " not divisible by " + std::to_string(heads) +
                                " heads");
    p.validate(d);
    const size_t dh = d / static_cast<size_t>(heads);
    const Tensor<T> q = matmul(tokens, p.wq);
    const Tensor<T> k = matmul(tokens, p.wk);
    const Tensor<T> v = matmul(tokens, p.wv);
    const T inv_scale = T(1) / std::sqrt(static_cast<T>(dh));
    Tensor<T> concat({n, d});
    for (int h = 0; h < heads; ++h) {
        const size_t c0 = static_cast<size_t>(h) * dh;
        const Tensor<T> qh = slice_cols(q, c0, c0 + dh);
        const Tensor<T> kh = slice_cols(k, c0, c0 + dh);
        const Tensor<T> vh = slice_cols(v, c0, c0 + dh);
        const Tensor<T> scores = scale(matmul(qh, transpose2d(kh)), inv_scale);
        const Tensor<T> attn = softmax(scores);
        if (attn_out) attn_out->push_back(attn);
        const Tensor<T> oh = matmul(attn, vh);
        for (size_t r = 0; r < n; ++r)
            for (size_t c = 0; c < dh; ++c) concat.at2(r, c0 + c) = oh.at2(r, c);
    }
    return matmul(concat, p.wo);
}

template <typename T>
Tensor<T> row_mean(const Tensor<T>& x) {
    if (x.rank() != 2) throw DimensionMismatch("row_mean expects rank-2");
    Tensor<T> out({x.dim(0)});
    for (size_t r = 0; r < x.dim(0); ++r) {
        T acc = 0;
        for (size_t c = 0; c < x.dim(1); ++c) acc += x.at2(r, c);
        out[r] = acc / static_cast<T>(x.dim(1));
    }
    return out;
}

template <typename T>
Tensor<T> col_mean(const Tensor<T>& x) {
    if (x.rank() != 2) throw DimensionMismatch("col_mean expects rank-2");
    Tensor<T> out({x.dim(1)});
    for (size_t c = 0; c < x.dim(1); ++c) {
        T acc = 0;
        for (size_t r = 0; r < x.dim(0); ++r) acc += x.at2(r, c);
        out[c] = acc / static_cast<T>(x.dim(0));
    }
    return out;
}

}  // namespace fv2es
