// Copyright (c) 2026 the fv2es authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "fv2es/graph.hpp"
#include "fv2es/rng.hpp"

namespace fv2es {

struct TokenSpan {
    double start_s = 0;
    double end_s = 0;
};

struct TokenSequence {
    std::vector<uint32_t> tokens;
    std::vector<TokenSpan> spans;  // optional, parallel to tokens when present
};

uint64_t fnv1a64(std::string_view s);

// Lowercase, split on whitespace/punctuation boundaries, hash each token
// (FNV-1a 64) modulo the vocabulary. Stable across platforms.
TokenSequence tokenize(const std::string& text, uint32_t vocab_size);

struct TextEncoderConfig {
    int vocab_size = 4096;
    int d_t = 64;
    int layers = 1;
    int heads = 4;
    int max_len = 256;

    void validate() const {
        if (vocab_size < 2 || d_t <= 0 || layers < 0 || heads <= 0 || max_len <= 0)
            throw ConfigError("bad text encoder configuration");
        if (d_t % heads != 0) throw ConfigError("text width must divide by heads");
    }
};

template <typename T>
struct TextLayerParams {
    Tensor<T> ln1_g, ln1_b, wq, wk, wv, wo;
    Tensor<T> ln2_g, ln2_b, ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

template <typename T>
struct TextEncoderParams {
    Tensor<T> embedding;   // vocab x d_t
    Tensor<T> pos;         // max_len x d_t
    Tensor<T> null_token;  // 1 x d_t, returned for empty input
    std::vector<TextLayerParams<T>> layers;

    static TextEncoderParams init(const TextEncoderConfig& cfg, Rng& rng) {
        cfg.validate();
        const size_t d = static_cast<size_t>(cfg.d_t);
        TextEncoderParams p;
        p.embedding = rng.normal_tensor<T>({static_cast<size_t>(cfg.vocab_size), d}, 0.02);
        p.pos = rng.normal_tensor<T>({static_cast<size_t>(cfg.max_len), d}, 0.02);
        p.null_token = rng.normal_tensor<T>({1, d}, 0.02);
        for (int l = 0; l < cfg.layers; ++l) {
            TextLayerParams<T> lp;
            lp.ln1_g = Tensor<T>::full({d}, T(1));
            lp.ln1_b = Tensor<T>({d});
            lp.wq = rng.normal_tensor<T>({d, d}, 0.02);
            lp.wk = rng.normal_tensor<T>({d, d}, 0.02);
            lp.wv = rng.normal_tensor<T>({d, d}, 0.02);
            lp.wo = rng.normal_tensor<T>({d, d}, 0.02);
            lp.ln2_g = Tensor<T>::full({d}, T(1));
            lp.ln2_b = Tensor<T>({d});
            lp.ffn_w1 = rng.normal_tensor<T>({d, 4 * d}, 0.02);
            lp.ffn_b1 = Tensor<T>({4 * d});
            lp.ffn_w2 = rng.normal_tensor<T>({4 * d, d}, 0.02);
            lp.ffn_b2 = Tensor<T>({d});
            p.layers.push_back(std::move(lp));
        }
        return p;
    }

    template <typename Fn>
    void visit(const std::string& prefix, Fn&& fn) {
        fn(prefix + ".embedding", embedding);
        fn(prefix + ".pos", pos);
        fn(prefix + ".null", null_token);
        for (size_t l = 0; l < layers.size(); ++l) {
            const std::string lp = prefix + ".layer" + std::to_string(l + 1);
            fn(lp + ".ln1_g", layers[l].ln1_g);
            fn(lp + ".ln1_b", layers[l].ln1_b);
            fn(lp + ".wq", layers[l].wq);
            fn(lp + ".wk", layers[l].wk);
            fn(lp + ".wv", layers[l].wv);
            fn(lp + ".wo", layers[l].wo);
            fn(lp + ".ln2_g", layers[l].ln2_g);
            fn(lp + ".ln2_b", layers[l].ln2_b);
            fn(lp + ".ffn_w1", layers[l].ffn_w1);
            fn(lp + ".ffn_b1", layers[l].ffn_b1);
            fn(lp + ".ffn_w2", layers[l].ffn_w2);
            fn(lp + ".ffn_b2", layers[l].ffn_b2);
        }
    }
};

template <typename T>
struct TextNodes {
    using Id = typename Graph<T>::NodeId;
    Id embedding, pos, null_token;
    struct Layer {
        Id ln1_g, ln1_b, wq, wk, wv, wo, ln2_g, ln2_b, ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    };
    std::vector<Layer> layers;

    static TextNodes lift(Graph<T>& g, const TextEncoderParams<T>& p, bool trainable) {
        TextNodes n;
        n.embedding = g.leaf(p.embedding, trainable);
        n.pos = g.leaf(p.pos, trainable);
        n.null_token = g.leaf(p.null_token, trainable);
        for (const auto& l : p.layers)
            n.layers.push_back({g.leaf(l.ln1_g, trainable), g.leaf(l.ln1_b, trainable), g.leaf(l.wq, trainable),
                                g.leaf(l.wk, trainable), g.leaf(l.wv, trainable), g.leaf(l.wo, trainable),
                                g.leaf(l.ln2_g, trainable), g.leaf(l.ln2_b, trainable), g.leaf(l.ffn_w1, trainable),
                                g.leaf(l.ffn_b1, trainable), g.leaf(l.ffn_w2, trainable), g.leaf(l.ffn_b2, trainable)});
        return n;
    }
};

// Embedding + learned positions + pre-norm encoder layers with feed-forward.
// Empty input returns the learned null-token feature (1 x d_t).
template <typename T>
typename Graph<T>::NodeId encode_text(Graph<T>& g, const TokenSequence& seq, const TextEncoderConfig& cfg,
                                      const TextNodes<T>& nodes) {
    cfg.validate();
    if (seq.tokens.empty()) return nodes.null_token;
    const size_t n = seq.tokens.size();
    const size_t d = static_cast<size_t>(cfg.d_t);
    if (n > static_cast<size_t>(cfg.max_len)) throw DimensionMismatch("token sequence exceeds max_len");
    auto idx = std::make_shared<std::vector<size_t>>();
    idx->reserve(n * d);
    for (uint32_t tok : seq.tokens) {
        if (tok >= static_cast<uint32_t>(cfg.vocab_size)) throw DimensionMismatch("token id outside vocabulary");
        for (size_t j = 0; j < d; ++j) idx->push_back(static_cast<size_t>(tok) * d + j);
    }
    auto x = g.add(g.gather(nodes.embedding, idx, {n, d}), g.slice_rows(nodes.pos, 0, n));
    for (const auto& l : nodes.layers) {
        auto attn = graph_mha(g, g.layer_norm(x, l.ln1_g, l.ln1_b, static_cast<T>(1e-5)), l.wq, l.wk, l.wv, l.wo,
                              cfg.heads);
        x = g.add(x, attn);
        auto normed = g.layer_norm(x, l.ln2_g, l.ln2_b, static_cast<T>(1e-5));
        auto h = g.relu(g.add_rowvec(g.matmul(normed, l.ffn_w1), l.ffn_b1));
        auto ffn = g.add_rowvec(g.matmul(h, l.ffn_w2), l.ffn_b2);
        x = g.add(x, ffn);
    }
    return x;
}

template <typename T>
Tensor<T> encode_text_pure(const TokenSequence& seq, const TextEncoderConfig& cfg, const TextEncoderParams<T>& params) {
    Graph<T> g(false);
    auto nodes = TextNodes<T>::lift(g, params, false);
    return g.value(encode_text(g, seq, cfg, nodes));
}

}  // namespace fv2es
