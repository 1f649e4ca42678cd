// Copyright (c) 2026 the fv2es authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fv2es/graph.hpp"
#include "fv2es/rng.hpp"

namespace fv2es {

// Six blocks of 3x3 conv + 1x1 conv + identity branches (each with batch
// norm) for training; algebraically merged into one 3x3 conv + bias per
// block for inference.

struct BlockSpec {
    int c_in = 0;
    int c_out = 0;
    int stride = 1;

    bool has_identity() const { return c_in == c_out && stride == 1; }
};

struct VisionNetConfig {
    int input_side = 64;
    std::vector<BlockSpec> blocks;  // exactly six

    static VisionNetConfig defaults() {
        VisionNetConfig cfg;
        cfg.input_side = 64;
        cfg.blocks = {{3, 16, 2}, {16, 32, 2}, {32, 32, 1}, {32, 64, 2}, {64, 64, 1}, {64, 128, 2}};
        return cfg;
    }

    void validate() const {
        if (blocks.size() != 6) throw ConfigError("vision net must have exactly six layers");
        if (input_side <= 0) throw ConfigError("vision input side must be positive");
        for (size_t i = 0; i < blocks.size(); ++i) {
            if (blocks[i].c_in <= 0 || blocks[i].c_out <= 0 || blocks[i].stride < 1)
                throw ConfigError("bad vision block spec");
            if (i > 0 && blocks[i].c_in != blocks[i - 1].c_out) throw ConfigError("vision channel chain mismatch");
        }
    }

    int feature_dim() const { return blocks.back().c_out; }
};

template <typename T>
struct TrainBlockParams {
    Tensor<T> conv3;  // c_out x c_in x 3 x 3, no bias: BN provides the affine
    BatchNormParams<T> bn3;
    Tensor<T> conv1;  // c_out x c_in x 1 x 1
    BatchNormParams<T> bn1;
    std::optional<BatchNormParams<T>> bn_id;  // present iff c_in == c_out and stride == 1
    int stride = 1;

    size_t c_out() const { return conv3.dim(0); }
    size_t c_in() const { return conv3.dim(1); }
};

template <typename T>
struct FusedBlockParams {
    Tensor<T> kernel;  // c_out x c_in x 3 x 3
    Tensor<T> bias;    // c_out
    int stride = 1;
};

template <typename T>
struct VisionNetParams {
    VisionNetConfig cfg;
    std::vector<TrainBlockParams<T>> blocks;

    static VisionNetParams init(const VisionNetConfig& cfg, Rng& rng) {
        cfg.validate();
        VisionNetParams net;
        net.cfg = cfg;
        for (const BlockSpec& spec : cfg.blocks) {
            TrainBlockParams<T> b;
            const size_t ci = spec.c_in, co = spec.c_out;
            b.conv3 = rng.normal_tensor<T>({co, ci, 3, 3}, std::sqrt(2.0 / (9.0 * static_cast<double>(ci))));
            b.bn3 = BatchNormParams<T>::identity(co);
            b.conv1 = rng.normal_tensor<T>({co, ci, 1, 1}, std::sqrt(2.0 / static_cast<double>(ci)));
            b.bn1 = BatchNormParams<T>::identity(co);
            if (spec.has_identity()) b.bn_id = BatchNormParams<T>::identity(ci);
            b.stride = spec.stride;
            net.blocks.push_back(std::move(b));
        }
        return net;
    }

    // Trainable tensors in fixed order; running statistics are buffers.
    template <typename Fn>
    void visit_trainable(const std::string& prefix, Fn&& fn) {
        for (size_t i = 0; i < blocks.size(); ++i) {
            const std::string bp = prefix + ".block" + std::to_string(i + 1);
            fn(bp + ".conv3", blocks[i].conv3);
            fn(bp + ".bn3.gamma", blocks[i].bn3.gamma);
            fn(bp + ".bn3.beta", blocks[i].bn3.beta);
            fn(bp + ".conv1", blocks[i].conv1);
            fn(bp + ".bn1.gamma", blocks[i].bn1.gamma);
            fn(bp + ".bn1.beta", blocks[i].bn1.beta);
            if (blocks[i].bn_id) {
                fn(bp + ".bn_id.gamma", blocks[i].bn_id->gamma);
                fn(bp + ".bn_id.beta", blocks[i].bn_id->beta);
            }
        }
    }

    template <typename Fn>
    void visit_buffers(const std::string& prefix, Fn&& fn) {
        for (size_t i = 0; i < blocks.size(); ++i) {
            const std::string bp = prefix + ".block" + std::to_string(i + 1);
            fn(bp + ".bn3.mean", blocks[i].bn3.running_mean);
            fn(bp + ".bn3.var", blocks[i].bn3.running_var);
            fn(bp + ".bn1.mean", blocks[i].bn1.running_mean);
            fn(bp + ".bn1.var", blocks[i].bn1.running_var);
            if (blocks[i].bn_id) {
                fn(bp + ".bn_id.mean", blocks[i].bn_id->running_mean);
                fn(bp + ".bn_id.var", blocks[i].bn_id->running_var);
            }
        }
    }
};

template <typename T>
struct FusedVisionNet {
    VisionNetConfig cfg;
    std::vector<FusedBlockParams<T>> blocks;

    template <typename Fn>
    void visit(const std::string& prefix, Fn&& fn) {
        for (size_t i = 0; i < blocks.size(); ++i) {
            const std::string bp = prefix + ".block" + std::to_string(i + 1);
            fn(bp + ".kernel", blocks[i].kernel);
            fn(bp + ".bias", blocks[i].bias);
        }
    }
};

// ReLU( BN3(conv3(x)) + BN1(conv1(x)) + [BN_id(x)] ). The 1x1 branch runs
// pad 0 at the block stride, spatially aligned with the 3x3 pad-1 path.
template <typename T>
Tensor<T> block_forward_train(const Tensor<T>& x, const TrainBlockParams<T>& p) {
    Tensor<T> acc = add(batch_norm_eval(conv2d(x, p.conv3, p.stride, 1), p.bn3),
                        batch_norm_eval(conv2d(x, p.conv1, p.stride, 0), p.bn1));
    if (p.bn_id) acc = add(acc, batch_norm_eval(x, *p.bn_id));
    return relu(acc);
}

template <typename T>
Tensor<T> block_forward_fused(const Tensor<T>& x, const FusedBlockParams<T>& p) {
    return relu(conv2d(x, p.kernel, p.bias, p.stride, 1));
}

template <typename T>
Tensor<T> vision_forward_train(const Tensor<T>& frame, const VisionNetParams<T>& net) {
    Tensor<T> x = frame;
    for (const auto& b : net.blocks) x = block_forward_train(x, b);
    return x;
}

template <typename T>
Tensor<T> vision_forward_fused(const Tensor<T>& frame, const FusedVisionNet<T>& net) {
    Tensor<T> x = frame;
    for (const auto& b : net.blocks) x = block_forward_fused(x, b);
    return x;
}

// Absorb eval-mode batch norm into the preceding convolution:
//   kernel'_c = kernel_c * gamma_c / sqrt(var_c + eps)
//   bias'_c   = beta_c - mean_c * gamma_c / sqrt(var_c + eps)
template <typename T>
std::pair<Tensor<T>, Tensor<T>> fold_bn(const Tensor<T>& kernel, const BatchNormParams<T>& bn) {
    bn.validate();
    const size_t co = kernel.dim(0);
    if (co != bn.channels()) throw DimensionMismatch("fold_bn channel count");
    Tensor<T> k(kernel.shape());
    Tensor<T> b({co});
    const size_t per = kernel.numel() / co;
    for (size_t c = 0; c < co; ++c) {
        const T inv = bn.gamma[c] / std::sqrt(bn.running_var[c] + bn.epsilon);
        for (size_t i = 0; i < per; ++i) k[c * per + i] = kernel[c * per + i] * inv;
        b[c] = bn.beta[c] - bn.running_mean[c] * inv;
    }
    return {std::move(k), std::move(b)};
}

// The scalar tap moves to the 3x3 center, zeros elsewhere.
template <typename T>
Tensor<T> pad_1x1_to_3x3(const Tensor<T>& kernel) {
    if (kernel.rank() != 4 || kernel.dim(2) != 1 || kernel.dim(3) != 1)
        throw DimensionMismatch("pad_1x1_to_3x3 expects a 1x1 kernel");
    const size_t co = kernel.dim(0), ci = kernel.dim(1);
    Tensor<T> out({co, ci, 3, 3});
    for (size_t o = 0; o < co; ++o)
        for (size_t i = 0; i < ci; ++i) out[((o * ci + i) * 3 + 1) * 3 + 1] = kernel[o * ci + i];
    return out;
}

// Dirac kernel: identity as a 3x3 convolution at stride 1, pad 1.
template <typename T>
Tensor<T> identity_to_3x3(size_t channels) {
    Tensor<T> out({channels, channels, 3, 3});
    for (size_t c = 0; c < channels; ++c) out[((c * channels + c) * 3 + 1) * 3 + 1] = T(1);
    return out;
}

// Branch sum by linearity of convolution: exact pre-ReLU equivalence, and
// ReLU is monotone so the post-ReLU outputs match at the same tolerance.
template <typename T>
FusedBlockParams<T> fuse_block(const TrainBlockParams<T>& p) {
    auto [k3, b3] = fold_bn(p.conv3, p.bn3);
    auto [k1, b1] = fold_bn(p.conv1, p.bn1);
    const Tensor<T> k1p = pad_1x1_to_3x3(k1);
    FusedBlockParams<T> out;
    out.stride = p.stride;
    out.kernel = add(k3, k1p);
    out.bias = add(b3, b1);
    if (p.bn_id) {
        auto [kid, bid] = fold_bn(identity_to_3x3<T>(p.c_in()), *p.bn_id);
        out.kernel = add(out.kernel, kid);
        out.bias = add(out.bias, bid);
    }
    return out;
}

template <typename T>
FusedVisionNet<T> fuse_network(const VisionNetParams<T>& net) {
    net.cfg.validate();
    FusedVisionNet<T> out;
    out.cfg = net.cfg;
    out.blocks.reserve(net.blocks.size());
    for (const auto& b : net.blocks) out.blocks.push_back(fuse_block(b));
    return out;
}

// Per-frame feature vectors: six blocks then global average pooling.
template <typename T, typename Net>
Tensor<T> frame_features(const std::vector<Tensor<T>>& frames, const Net& net,
                         Tensor<T> (*forward)(const Tensor<T>&, const Net&)) {
    const size_t feat = static_cast<size_t>(net.cfg.feature_dim());
    if (frames.empty()) return Tensor<T>();  // empty sequence, not an error
    Tensor<T> out({frames.size(), feat});
    for (size_t f = 0; f < frames.size(); ++f) {
        if (!frames[f].same_shape(frames[0])) throw DimensionMismatch("frames must share one shape");
        const Tensor<T> y = forward(frames[f], net);
        const size_t hw = y.dim(1) * y.dim(2);
        for (size_t c = 0; c < feat; ++c) {
            T acc = 0;
            for (size_t i = 0; i < hw; ++i) acc += y[c * hw + i];
            out.at2(f, c) = acc / static_cast<T>(hw);
        }
    }
    return out;
}

template <typename T>
Tensor<T> frame_features(const std::vector<Tensor<T>>& frames, const VisionNetParams<T>& net) {
    return frame_features<T, VisionNetParams<T>>(frames, net, &vision_forward_train<T>);
}

template <typename T>
Tensor<T> frame_features(const std::vector<Tensor<T>>& frames, const FusedVisionNet<T>& net) {
    return frame_features<T, FusedVisionNet<T>>(frames, net, &vision_forward_fused<T>);
}

// Training-path graph forward for one frame, bit-equal to
// vision_forward_train on the same parameters.
template <typename T>
struct VisionNodes {
    using Id = typename Graph<T>::NodeId;
    struct Block {
        Id conv3, bn3_g, bn3_b, conv1, bn1_g, bn1_b;
        Id bnid_g = -1, bnid_b = -1;
    };
    std::vector<Block> blocks;

    static VisionNodes lift(Graph<T>& g, const VisionNetParams<T>& net, bool trainable) {
        VisionNodes n;
        for (const auto& b : net.blocks) {
            Block nb;
            nb.conv3 = g.leaf(b.conv3, trainable);
            nb.bn3_g = g.leaf(b.bn3.gamma, trainable);
            nb.bn3_b = g.leaf(b.bn3.beta, trainable);
            nb.conv1 = g.leaf(b.conv1, trainable);
            nb.bn1_g = g.leaf(b.bn1.gamma, trainable);
            nb.bn1_b = g.leaf(b.bn1.beta, trainable);
            if (b.bn_id) {
                nb.bnid_g = g.leaf(b.bn_id->gamma, trainable);
                nb.bnid_b = g.leaf(b.bn_id->beta, trainable);
            }
            n.blocks.push_back(nb);
        }
        return n;
    }
};

template <typename T>
typename Graph<T>::NodeId vision_graph_forward(Graph<T>& g, typename Graph<T>::NodeId frame,
                                               const VisionNetParams<T>& net, const VisionNodes<T>& nodes) {
    auto x = frame;
    for (size_t i = 0; i < net.blocks.size(); ++i) {
        const auto& b = net.blocks[i];
        const auto& nb = nodes.blocks[i];
        auto y3 = g.batch_norm_eval(g.conv2d(x, nb.conv3, -1, b.stride, 1), nb.bn3_g, nb.bn3_b, b.bn3.running_mean,
                                    b.bn3.running_var, b.bn3.epsilon);
        auto y1 = g.batch_norm_eval(g.conv2d(x, nb.conv1, -1, b.stride, 0), nb.bn1_g, nb.bn1_b, b.bn1.running_mean,
                                    b.bn1.running_var, b.bn1.epsilon);
        auto acc = g.add(y3, y1);
        if (b.bn_id)
            acc = g.add(acc, g.batch_norm_eval(x, nb.bnid_g, nb.bnid_b, b.bn_id->running_mean, b.bn_id->running_var,
                                               b.bn_id->epsilon));
        x = g.relu(acc);
    }
    return x;
}

// Global average pool of a graph feature map to a 1 x C row.
template <typename T>
typename Graph<T>::NodeId graph_global_avg_pool(Graph<T>& g, typename Graph<T>::NodeId map) {
    const auto& v = g.value(map);
    if (v.rank() != 3) throw DimensionMismatch("global_avg_pool expects C x H x W");
    const size_t c = v.dim(0), hw = v.dim(1) * v.dim(2);
    auto rows = g.reshape(map, {c, hw});
    return g.reshape(g.row_mean(rows), {1, c});
}

struct ParamCount {
    std::vector<size_t> per_layer;
    size_t total = 0;
};

// Train layer: 9*Cin*Cout + Cin*Cout + 4*Cout per BN present.
inline ParamCount count_params_train(const VisionNetConfig& cfg) {
    cfg.validate();
    ParamCount out;
    for (const BlockSpec& b : cfg.blocks) {
        const size_t ci = b.c_in, co = b.c_out;
        size_t n = 9 * ci * co + ci * co + 4 * co + 4 * co;
        if (b.has_identity()) n += 4 * co;
        out.per_layer.push_back(n);
        out.total += n;
    }
    return out;
}

// Fused layer: 9*Cin*Cout + Cout.
inline ParamCount count_params_fused(const VisionNetConfig& cfg) {
    cfg.validate();
    ParamCount out;
    for (const BlockSpec& b : cfg.blocks) {
        const size_t n = 9 * static_cast<size_t>(b.c_in) * b.c_out + b.c_out;
        out.per_layer.push_back(n);
        out.total += n;
    }
    return out;
}

struct FlopCount {
    std::vector<size_t> per_layer;
    size_t total = 0;
};

inline size_t conv_out_side(size_t in, size_t k, size_t stride, size_t pad) { return (in + 2 * pad - k) / stride + 1; }

// Exact flop accounting for one frame, multiply-accumulate = 2 flops;
// batch norm = 2 flops/element, adds and relu = 1 flop/element.
inline FlopCount count_flops(const VisionNetConfig& cfg, bool fused) {
    cfg.validate();
    FlopCount out;
    size_t side = cfg.input_side;
    for (const BlockSpec& b : cfg.blocks) {
        const size_t oside = conv_out_side(side, 3, b.stride, 1);
        const size_t ohw = oside * oside;
        const size_t co = b.c_out, ci = b.c_in;
        size_t n = 0;
        if (fused) {
            n += 2 * 9 * ci * co * ohw;  // conv MACs
            n += co * ohw;               // bias add
            n += co * ohw;               // relu
        } else {
            n += 2 * 9 * ci * co * ohw;  // 3x3 branch MACs
            n += 2 * ci * co * ohw;      // 1x1 branch MACs
            n += 2 * co * ohw * 2;       // two batch norms
            n += co * ohw;               // branch add
            if (b.has_identity()) {
                n += 2 * co * ohw;  // identity batch norm
                n += co * ohw;      // extra add
            }
            n += co * ohw;  // relu
        }
        out.per_layer.push_back(n);
        out.total += n;
        side = oside;
    }
    return out;
}

}  // namespace fv2es
