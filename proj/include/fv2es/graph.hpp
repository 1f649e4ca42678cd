// Copyright (c) 2026 the fv2es authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "fv2es/tensor_ops.hpp"

namespace fv2es {

// Reverse-mode tape over the tensor ops. Nodes are appended in evaluation
// order, so creation order is already a topological order and backward() is
// a single reverse sweep. One Graph per training step; inference can reuse
// the same forward code with recording switched off.
template <typename T>
class Graph {
public:
    using NodeId = int;

    explicit Graph(bool recording = true) : recording_(recording) {}

    bool recording() const { return recording_; }

    NodeId leaf(Tensor<T> value, bool requires_grad) {
        return push(std::move(value), {}, requires_grad, nullptr);
    }

    NodeId constant(Tensor<T> value) { return leaf(std::move(value), false); }

    const Tensor<T>& value(NodeId id) const { return nodes_[check(id)].value; }

    // Gradient of the loss w.r.t. node `id`; zeros if the node was never
    // reached by the backward sweep.
    Tensor<T> grad(NodeId id) const {
        const Node& n = nodes_[check(id)];
        if (n.grad.numel() == 0) return Tensor<T>(n.value.shape());
        return n.grad;
    }

    size_t size() const { return nodes_.size(); }

    void backward(NodeId loss) {
        if (!recording_) throw NotScalarLoss("backward on a non-recording graph");
        Node& ln = nodes_[check(loss)];
        if (ln.value.numel() != 1) throw NotScalarLoss("loss has " + std::to_string(ln.value.numel()) + " elements");
        for (Node& n : nodes_) n.grad = Tensor<T>();
        ln.grad = Tensor<T>::full(ln.value.shape(), T(1));
        for (int i = loss; i >= 0; --i) {
            Node& n = nodes_[i];
            if (!n.requires_grad || !n.backward || n.grad.numel() == 0) continue;
            n.backward();
        }
    }

    // ---- ops ----

    NodeId add(NodeId a, NodeId b) {
        Tensor<T> out = fv2es::add(value(a), value(b));
        return push(std::move(out), {a, b}, wants(a, b), [this, a, b](const Tensor<T>& g) {
            accum(a, g);
            accum(b, g);
        });
    }

    // rows(a) + broadcast row vector v
    NodeId add_rowvec(NodeId a, NodeId v) {
        const Tensor<T>& av = value(a);
        const Tensor<T>& vv = value(v);
        if (av.rank() != 2 || vv.numel() != av.dim(1)) throw DimensionMismatch("add_rowvec shapes");
        Tensor<T> out(av.shape());
        for (size_t r = 0; r < av.dim(0); ++r)
            for (size_t c = 0; c < av.dim(1); ++c) out.at2(r, c) = av.at2(r, c) + vv[c];
        ensure_finite(out, "add_rowvec");
        return push(std::move(out), {a, v}, wants(a, v), [this, a, v](const Tensor<T>& g) {
            accum(a, g);
            Tensor<T> dv({g.dim(1)});
            for (size_t r = 0; r < g.dim(0); ++r)
                for (size_t c = 0; c < g.dim(1); ++c) dv[c] += g.at2(r, c);
            accum(v, dv);
        });
    }

    NodeId mul(NodeId a, NodeId b) {
        Tensor<T> out = fv2es::mul(value(a), value(b));
        return push(std::move(out), {a, b}, wants(a, b), [this, a, b](const Tensor<T>& g) {
            accum(a, fv2es::mul(g, value(b)));
            accum(b, fv2es::mul(g, value(a)));
        });
    }

    NodeId scale_const(NodeId a, T s) {
        Tensor<T> out = fv2es::scale(value(a), s);
        return push(std::move(out), {a}, wants(a), [this, a, s](const Tensor<T>& g) { accum(a, fv2es::scale(g, s)); });
    }

    // a * s where s is a one-element node (used by modality weighting).
    NodeId mul_scalar(NodeId a, NodeId s) {
        const Tensor<T>& sv = value(s);
        if (sv.numel() != 1) throw DimensionMismatch("mul_scalar expects a one-element scale node");
        Tensor<T> out = fv2es::scale(value(a), sv[0]);
        return push(std::move(out), {a, s}, wants(a, s), [this, a, s](const Tensor<T>& g) {
            accum(a, fv2es::scale(g, value(s)[0]));
            T acc = 0;
            const Tensor<T>& av = value(a);
            for (size_t i = 0; i < g.numel(); ++i) acc += g[i] * av[i];
            accum(s, Tensor<T>::full(value(s).shape(), acc));
        });
    }

    NodeId matmul(NodeId a, NodeId b) {
        Tensor<T> out = fv2es::matmul(value(a), value(b));
        return push(std::move(out), {a, b}, wants(a, b), [this, a, b](const Tensor<T>& g) {
            accum(a, fv2es::matmul(g, transpose2d(value(b))));
            accum(b, fv2es::matmul(transpose2d(value(a)), g));
        });
    }

    NodeId transpose(NodeId a) {
        Tensor<T> out = transpose2d(value(a));
        return push(std::move(out), {a}, wants(a), [this, a](const Tensor<T>& g) { accum(a, transpose2d(g)); });
    }

    NodeId conv2d(NodeId x, NodeId kernel, NodeId bias, int stride, int pad) {
        const Tensor<T>* bp = bias >= 0 ? &value(bias) : nullptr;
        Tensor<T> out = fv2es::conv2d(value(x), value(kernel), bp, stride, pad);
        const bool rg = bias >= 0 ? wants(x, kernel, bias) : wants(x, kernel);
        std::vector<NodeId> ins = bias >= 0 ? std::vector<NodeId>{x, kernel, bias} : std::vector<NodeId>{x, kernel};
        return push(std::move(out), std::move(ins), rg, [this, x, kernel, bias, stride, pad](const Tensor<T>& g) {
            const Tensor<T>& xv = value(x);
            const Tensor<T>& kv = value(kernel);
            const size_t co = kv.dim(0), ci = kv.dim(1), ks = kv.dim(2);
            Tensor<T> dx(xv.shape());
            Tensor<T> dk(kv.shape());
            for (size_t o = 0; o < co; ++o)
                for (size_t oy = 0; oy < g.dim(1); ++oy)
                    for (size_t ox = 0; ox < g.dim(2); ++ox) {
                        const T gv = g.at3(o, oy, ox);
                        if (gv == T(0)) continue;
                        for (size_t c = 0; c < ci; ++c)
                            for (size_t ky = 0; ky < ks; ++ky) {
                                const long iy = static_cast<long>(oy) * stride + static_cast<long>(ky) - pad;
                                if (iy < 0 || iy >= static_cast<long>(xv.dim(1))) continue;
                                for (size_t kx = 0; kx < ks; ++kx) {
                                    const long ix = static_cast<long>(ox) * stride + static_cast<long>(kx) - pad;
                                    if (ix < 0 || ix >= static_cast<long>(xv.dim(2))) continue;
                                    dx.at3(c, iy, ix) += gv * kv[((o * ci + c) * ks + ky) * ks + kx];
                                    dk[((o * ci + c) * ks + ky) * ks + kx] += gv * xv.at3(c, iy, ix);
                                }
                            }
                    }
            accum(x, dx);
            accum(kernel, dk);
            if (bias >= 0) {
                Tensor<T> db({co});
                for (size_t o = 0; o < co; ++o)
                    for (size_t i = 0; i < g.dim(1) * g.dim(2); ++i) db[o] += g[o * g.dim(1) * g.dim(2) + i];
                accum(bias, db);
            }
        });
    }

    NodeId maxpool2d(NodeId x, int k, int stride, int pad) {
        auto argmax = std::make_shared<std::vector<size_t>>();
        Tensor<T> out = fv2es::maxpool2d(value(x), k, stride, pad, argmax.get());
        return push(std::move(out), {x}, wants(x), [this, x, argmax](const Tensor<T>& g) {
            Tensor<T> dx(value(x).shape());
            for (size_t i = 0; i < g.numel(); ++i) dx[(*argmax)[i]] += g[i];
            accum(x, dx);
        });
    }

    // Eval-mode batch norm: running statistics are constant buffers, gamma
    // and beta are the trainable inputs.
    NodeId batch_norm_eval(NodeId x, NodeId gamma, NodeId beta, Tensor<T> running_mean, Tensor<T> running_var, T eps) {
        BatchNormParams<T> p;
        p.gamma = value(gamma);
        p.beta = value(beta);
        p.running_mean = running_mean;
        p.running_var = running_var;
        p.epsilon = eps;
        Tensor<T> out = fv2es::batch_norm_eval(value(x), p);
        auto mean = std::make_shared<Tensor<T>>(std::move(running_mean));
        auto var = std::make_shared<Tensor<T>>(std::move(running_var));
        return push(std::move(out), {x, gamma, beta}, wants(x, gamma, beta),
                    [this, x, gamma, beta, mean, var, eps](const Tensor<T>& g) {
                        const Tensor<T>& xv = value(x);
                        const Tensor<T>& gv = value(gamma);
                        const size_t c = xv.dim(0), hw = xv.dim(1) * xv.dim(2);
                        Tensor<T> dx(xv.shape()), dgamma({c}), dbeta({c});
                        for (size_t ch = 0; ch < c; ++ch) {
                            const T inv = T(1) / std::sqrt((*var)[ch] + eps);
                            for (size_t i = 0; i < hw; ++i) {
                                const size_t idx = ch * hw + i;
                                const T xhat = (xv[idx] - (*mean)[ch]) * inv;
                                dx[idx] = g[idx] * gv[ch] * inv;
                                dgamma[ch] += g[idx] * xhat;
                                dbeta[ch] += g[idx];
                            }
                        }
                        accum(x, dx);
                        accum(gamma, dgamma);
                        accum(beta, dbeta);
                    });
    }

    NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta, T eps) {
        LayerNormParams<T> p;
        p.gamma = value(gamma);
        p.beta = value(beta);
        p.epsilon = eps;
        Tensor<T> out = fv2es::layer_norm(value(x), p);
        return push(std::move(out), {x, gamma, beta}, wants(x, gamma, beta),
                    [this, x, gamma, beta, eps](const Tensor<T>& g) {
                        const Tensor<T>& xv = value(x);
                        const Tensor<T>& gv = value(gamma);
                        const size_t d = xv.shape().back();
                        const size_t rows = xv.numel() / d;
                        Tensor<T> dx(xv.shape()), dgamma({d}), dbeta({d});
                        for (size_t r = 0; r < rows; ++r) {
                            const T* row = xv.data() + r * d;
                            const T* grow = g.data() + r * d;
                            T mean = 0;
                            for (size_t j = 0; j < d; ++j) mean += row[j];
                            mean /= static_cast<T>(d);
                            T var = 0;
                            for (size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
                            var /= static_cast<T>(d);
                            const T inv = T(1) / std::sqrt(var + eps);
                            T mean_h = 0, mean_hx = 0;
                            for (size_t j = 0; j < d; ++j) {
                                const T xhat = (row[j] - mean) * inv;
                                const T h = gv[j] * grow[j];
                                mean_h += h;
                                mean_hx += h * xhat;
                                dgamma[j] += grow[j] * xhat;
                                dbeta[j] += grow[j];
                            }
                            mean_h /= static_cast<T>(d);
                            mean_hx /= static_cast<T>(d);
                            for (size_t j = 0; j < d; ++j) {
                                const T xhat = (row[j] - mean) * inv;
                                dx[r * d + j] = inv * (gv[j] * grow[j] - mean_h - xhat * mean_hx);
                            }
                        }
                        accum(x, dx);
                        accum(gamma, dgamma);
                        accum(beta, dbeta);
                    });
    }

    NodeId gelu(NodeId x) {
        Tensor<T> out = fv2es::gelu(value(x));
        return push(std::move(out), {x}, wants(x), [this, x](const Tensor<T>& g) {
            const Tensor<T>& xv = value(x);
            Tensor<T> dx(xv.shape());
            const T inv_sqrt2 = T(1) / std::sqrt(T(2));
            const T inv_sqrt2pi = T(1) / std::sqrt(T(2) * static_cast<T>(3.14159265358979323846));
            for (size_t i = 0; i < xv.numel(); ++i) {
                const T cdf = static_cast<T>(0.5) * (T(1) + std::erf(xv[i] * inv_sqrt2));
                const T pdf = inv_sqrt2pi * std::exp(-xv[i] * xv[i] / T(2));
                dx[i] = g[i] * (cdf + xv[i] * pdf);
            }
            accum(x, dx);
        });
    }

    NodeId relu(NodeId x) {
        Tensor<T> out = fv2es::relu(value(x));
        return push(std::move(out), {x}, wants(x), [this, x](const Tensor<T>& g) {
            const Tensor<T>& xv = value(x);
            Tensor<T> dx(xv.shape());
            for (size_t i = 0; i < xv.numel(); ++i) dx[i] = xv[i] > 0 ? g[i] : T(0);
            accum(x, dx);
        });
    }

    NodeId sigmoid(NodeId x) {
        Tensor<T> out = fv2es::sigmoid(value(x));
        return push(std::move(out), {x}, wants(x), [this, x, out_id = next_id()](const Tensor<T>& g) {
            const Tensor<T>& y = value(out_id);
            Tensor<T> dx(y.shape());
            for (size_t i = 0; i < y.numel(); ++i) dx[i] = g[i] * y[i] * (T(1) - y[i]);
            accum(x, dx);
        });
    }

    NodeId softmax(NodeId x) {
        Tensor<T> out = fv2es::softmax(value(x));
        return push(std::move(out), {x}, wants(x), [this, x, out_id = next_id()](const Tensor<T>& g) {
            const Tensor<T>& y = value(out_id);
            const size_t d = y.shape().back();
            const size_t rows = y.numel() / d;
            Tensor<T> dx(y.shape());
            for (size_t r = 0; r < rows; ++r) {
                T dot = 0;
                for (size_t j = 0; j < d; ++j) dot += g[r * d + j] * y[r * d + j];
                for (size_t j = 0; j < d; ++j) dx[r * d + j] = y[r * d + j] * (g[r * d + j] - dot);
            }
            accum(x, dx);
        });
    }

    NodeId reshape(NodeId x, std::vector<size_t> shape) {
        Tensor<T> out = value(x).reshaped(shape);
        return push(std::move(out), {x}, wants(x), [this, x](const Tensor<T>& g) {
            accum(x, g.reshaped(value(x).shape()));
        });
    }

    NodeId slice_rows(NodeId x, size_t r0, size_t r1) {
        const Tensor<T>& xv = value(x);
        if (xv.rank() != 2 || r1 > xv.dim(0) || r0 >= r1) throw DimensionMismatch("slice_rows range");
        const size_t m = xv.dim(1);
        Tensor<T> out({r1 - r0, m});
        std::copy(xv.data() + r0 * m, xv.data() + r1 * m, out.data());
        return push(std::move(out), {x}, wants(x), [this, x, r0, r1, m](const Tensor<T>& g) {
            Tensor<T> dx(value(x).shape());
            std::copy(g.data(), g.data() + (r1 - r0) * m, dx.data() + r0 * m);
            accum(x, dx);
        });
    }

    NodeId slice_cols(NodeId x, size_t c0, size_t c1) {
        Tensor<T> out = fv2es::slice_cols(value(x), c0, c1);
        return push(std::move(out), {x}, wants(x), [this, x, c0, c1](const Tensor<T>& g) {
            const Tensor<T>& xv = value(x);
            Tensor<T> dx(xv.shape());
            for (size_t r = 0; r < xv.dim(0); ++r)
                for (size_t c = c0; c < c1; ++c) dx.at2(r, c) = g.at2(r, c - c0);
            accum(x, dx);
        });
    }

    NodeId concat_rows(const std::vector<NodeId>& parts) {
        if (parts.empty()) throw DimensionMismatch("concat_rows of nothing");
        const size_t m = value(parts[0]).dim(1);
        size_t rows = 0;
        for (NodeId p : parts) {
            if (value(p).rank() != 2 || value(p).dim(1) != m) throw DimensionMismatch("concat_rows column mismatch");
            rows += value(p).dim(0);
        }
        Tensor<T> out({rows, m});
        size_t r = 0;
        for (NodeId p : parts) {
            const Tensor<T>& pv = value(p);
            std::copy(pv.data(), pv.data() + pv.numel(), out.data() + r * m);
            r += pv.dim(0);
        }
        bool rg = false;
        for (NodeId p : parts) rg = rg || nodes_[p].requires_grad;
        return push(std::move(out), parts, rg, [this, parts, m](const Tensor<T>& g) {
            size_t row = 0;
            for (NodeId p : parts) {
                const size_t pr = value(p).dim(0);
                Tensor<T> dp({pr, m});
                std::copy(g.data() + row * m, g.data() + (row + pr) * m, dp.data());
                accum(p, dp);
                row += pr;
            }
        });
    }

    NodeId concat_cols(const std::vector<NodeId>& parts) {
        if (parts.empty()) throw DimensionMismatch("concat_cols of nothing");
        const size_t n = value(parts[0]).dim(0);
        size_t cols = 0;
        for (NodeId p : parts) {
            if (value(p).rank() != 2 || value(p).dim(0) != n) throw DimensionMismatch("concat_cols row mismatch");
            cols += value(p).dim(1);
        }
        Tensor<T> out({n, cols});
        size_t c0 = 0;
        for (NodeId p : parts) {
            const Tensor<T>& pv = value(p);
            for (size_t r = 0; r < n; ++r)
                for (size_t c = 0; c < pv.dim(1); ++c) out.at2(r, c0 + c) = pv.at2(r, c);
            c0 += pv.dim(1);
        }
        bool rg = false;
        for (NodeId p : parts) rg = rg || nodes_[p].requires_grad;
        return push(std::move(out), parts, rg, [this, parts, n](const Tensor<T>& g) {
            size_t col = 0;
            for (NodeId p : parts) {
                const size_t pc = value(p).dim(1);
                Tensor<T> dp({n, pc});
                for (size_t r = 0; r < n; ++r)
                    for (size_t c = 0; c < pc; ++c) dp.at2(r, c) = g.at2(r, col + c);
                accum(p, dp);
                col += pc;
            }
        });
    }

    // Pure element selection: out[i] = x[index[i]], e.g. patch extraction,
    // token<->map retiling, embedding lookup. Backward scatter-adds.
    NodeId gather(NodeId x, std::shared_ptr<const std::vector<size_t>> index, std::vector<size_t> out_shape) {
        const Tensor<T>& xv = value(x);
        Tensor<T> out(std::move(out_shape));
        if (index->size() != out.numel()) throw DimensionMismatch("gather index count vs output shape");
        for (size_t i = 0; i < out.numel(); ++i) {
            if ((*index)[i] >= xv.numel()) throw DimensionMismatch("gather index out of range");
            out[i] = xv[(*index)[i]];
        }
        return push(std::move(out), {x}, wants(x), [this, x, index](const Tensor<T>& g) {
            Tensor<T> dx(value(x).shape());
            for (size_t i = 0; i < g.numel(); ++i) dx[(*index)[i]] += g[i];
            accum(x, dx);
        });
    }

    NodeId row_mean(NodeId x) {
        Tensor<T> out = fv2es::row_mean(value(x));
        return push(std::move(out), {x}, wants(x), [this, x](const Tensor<T>& g) {
            const Tensor<T>& xv = value(x);
            Tensor<T> dx(xv.shape());
            const T inv = T(1) / static_cast<T>(xv.dim(1));
            for (size_t r = 0; r < xv.dim(0); ++r)
                for (size_t c = 0; c < xv.dim(1); ++c) dx.at2(r, c) = g[r] * inv;
            accum(x, dx);
        });
    }

    NodeId col_mean(NodeId x) {
        Tensor<T> out = fv2es::col_mean(value(x));
        return push(std::move(out), {x}, wants(x), [this, x](const Tensor<T>& g) {
            const Tensor<T>& xv = value(x);
            Tensor<T> dx(xv.shape());
            const T inv = T(1) / static_cast<T>(xv.dim(0));
            for (size_t r = 0; r < xv.dim(0); ++r)
                for (size_t c = 0; c < xv.dim(1); ++c) dx.at2(r, c) = g[c] * inv;
            accum(x, dx);
        });
    }

    NodeId mean_all(NodeId x) {
        const Tensor<T>& xv = value(x);
        T acc = 0;
        for (size_t i = 0; i < xv.numel(); ++i) acc += xv[i];
        Tensor<T> out = Tensor<T>::scalar(acc / static_cast<T>(xv.numel()));
        return push(std::move(out), {x}, wants(x), [this, x](const Tensor<T>& g) {
            const Tensor<T>& xv2 = value(x);
            accum(x, Tensor<T>::full(xv2.shape(), g[0] / static_cast<T>(xv2.numel())));
        });
    }

    NodeId sum_all(NodeId x) {
        const Tensor<T>& xv = value(x);
        T acc = 0;
        for (size_t i = 0; i < xv.numel(); ++i) acc += xv[i];
        Tensor<T> out = Tensor<T>::scalar(acc);
        return push(std::move(out), {x}, wants(x), [this, x](const Tensor<T>& g) {
            accum(x, Tensor<T>::full(value(x).shape(), g[0]));
        });
    }

    // Mean binary cross-entropy against constant {0,1} labels; probabilities
    // clamped to [1e-7, 1-1e-7] so saturated sigmoids keep the loss finite.
    NodeId bce(NodeId probs, Tensor<T> labels) {
        const Tensor<T>& pv = value(probs);
        if (!pv.same_shape(labels)) throw DimensionMismatch("bce probs vs labels shape");
        const T lo = static_cast<T>(1e-7), hi = T(1) - static_cast<T>(1e-7);
        T acc = 0;
        for (size_t i = 0; i < pv.numel(); ++i) {
            const T p = std::clamp(pv[i], lo, hi);
            const T y = labels[i];
            acc += -(y * std::log(p) + (T(1) - y) * std::log(T(1) - p));
        }
        Tensor<T> out = Tensor<T>::scalar(acc / static_cast<T>(pv.numel()));
        auto lab = std::make_shared<Tensor<T>>(std::move(labels));
        return push(std::move(out), {probs}, wants(probs), [this, probs, lab, lo, hi](const Tensor<T>& g) {
            const Tensor<T>& pv2 = value(probs);
            Tensor<T> dp(pv2.shape());
            const T inv_n = T(1) / static_cast<T>(pv2.numel());
            for (size_t i = 0; i < pv2.numel(); ++i) {
                if (pv2[i] <= lo || pv2[i] >= hi) continue;  // clamped region: flat
                dp[i] = g[0] * inv_n * (pv2[i] - (*lab)[i]) / (pv2[i] * (T(1) - pv2[i]));
            }
            accum(probs, dp);
        });
    }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        std::vector<NodeId> inputs;
        std::function<void()> backward;
        bool requires_grad = false;
    };

    NodeId next_id() const { return static_cast<NodeId>(nodes_.size()); }

    NodeId check(NodeId id) const {
        if (id < 0 || id >= static_cast<NodeId>(nodes_.size())) throw BadShape("invalid graph node id");
        return id;
    }

    bool wants(NodeId a) const { return nodes_[check(a)].requires_grad; }
    bool wants(NodeId a, NodeId b) const { return wants(a) || wants(b); }
    bool wants(NodeId a, NodeId b, NodeId c) const { return wants(a) || wants(b) || wants(c); }

    void accum(NodeId id, const Tensor<T>& delta) {
        Node& n = nodes_[check(id)];
        if (!n.requires_grad) return;
        if (!delta.same_shape(n.value)) throw DimensionMismatch("gradient shape does not match value shape");
        if (n.grad.numel() == 0) n.grad = Tensor<T>(n.value.shape());
        for (size_t i = 0; i < delta.numel(); ++i) n.grad[i] += delta[i];
    }

    template <typename Fn>
    NodeId push(Tensor<T> value, std::vector<NodeId> inputs, bool requires_grad, Fn&& bw) {
        Node n;
        n.value = std::move(value);
        n.requires_grad = requires_grad;
        const NodeId id = next_id();
        if (recording_ && requires_grad) {
            n.inputs = std::move(inputs);
            if constexpr (!std::is_same_v<std::decay_t<Fn>, std::nullptr_t>) {
                auto fn = std::forward<Fn>(bw);
                n.backward = [this, id, fn]() { fn(nodes_[id].grad); };
            }
        }
        nodes_.push_back(std::move(n));
        return id;
    }

    NodeId push(Tensor<T> value, std::vector<NodeId> inputs, bool requires_grad, std::nullptr_t) {
        Node n;
        n.value = std::move(value);
        n.requires_grad = requires_grad;
        n.inputs = std::move(inputs);
        nodes_.push_back(std::move(n));
        return next_id() - 1;
    }

    std::vector<Node> nodes_;
    bool recording_;
};

// Multi-head self-attention composed from graph primitives. When `capture`
// is non-null it receives the head-averaged n x n attention matrix (the mean
// of row-stochastic matrices is row-stochastic).
template <typename T>
typename Graph<T>::NodeId graph_mha(Graph<T>& g, typename Graph<T>::NodeId x, typename Graph<T>::NodeId wq,
                                    typename Graph<T>::NodeId wk, typename Graph<T>::NodeId wv,
                                    typename Graph<T>::NodeId wo, int heads, Tensor<T>* capture = nullptr) {
    const size_t d = g.value(x).dim(1);
    if (heads < 1 || d % static_cast<size_t>(heads) != 0) throw DimensionMismatch("head count must divide width");
    const size_t dh = d / static_cast<size_t>(heads);
    const auto q = g.matmul(x, wq);
    const auto k = g.matmul(x, wk);
    const auto v = g.matmul(x, wv);
    std::vector<typename Graph<T>::NodeId> heads_out;
    Tensor<T> attn_mean;
    for (int h = 0; h < heads; ++h) {
        const size_t c0 = static_cast<size_t>(h) * dh;
        const auto qh = g.slice_cols(q, c0, c0 + dh);
        const auto kh = g.slice_cols(k, c0, c0 + dh);
        const auto vh = g.slice_cols(v, c0, c0 + dh);
        const auto scores = g.scale_const(g.matmul(qh, g.transpose(kh)), T(1) / std::sqrt(static_cast<T>(dh)));
        const auto attn = g.softmax(scores);
        if (capture) {
            if (h == 0)
                attn_mean = g.value(attn);
            else
                attn_mean = fv2es::add(attn_mean, g.value(attn));
        }
        heads_out.push_back(g.matmul(attn, vh));
    }
    if (capture) *capture = fv2es::scale(attn_mean, T(1) / static_cast<T>(heads));
    const auto concat = heads > 1 ? g.concat_cols(heads_out) : heads_out[0];
    return g.matmul(concat, wo);
}

// Mean BCE of probabilities against {0,1} labels; the pure counterpart of
// Graph::bce, shared by evaluation code.
template <typename T>
T bce_loss(const Tensor<T>& probs, const Tensor<T>& labels) {
    if (!probs.same_shape(labels)) throw DimensionMismatch("bce_loss probs vs labels shape");
    const T lo = static_cast<T>(1e-7), hi = T(1) - static_cast<T>(1e-7);
    T acc = 0;
    for (size_t i = 0; i < probs.numel(); ++i) {
        const T p = std::clamp(probs[i], lo, hi);
        acc += -(labels[i] * std::log(p) + (T(1) - labels[i]) * std::log(T(1) - p));
    }
    return acc / static_cast<T>(probs.numel());
}

}  // namespace fv2es
