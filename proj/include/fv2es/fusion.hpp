// Copyright (c) 2026 the fv2es authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <string>
#include <vector>

#include "fv2es/graph.hpp"
#include "fv2es/rng.hpp"

namespace fv2es {

enum class LabelSet { Iemocap, Mosei };

inline const std::array<std::string, 6>& label_names(LabelSet set) {
    static const std::array<std::string, 6> iemocap{"anger", "excitement", "frustration",
                                                    "happiness", "neutral", "sadness"};
    static const std::array<std::string, 6> mosei{"happiness", "sadness", "anger", "fear", "disgust", "surprise"};
    return set == LabelSet::Iemocap ? iemocap : mosei;
}

inline std::string label_set_name(LabelSet set) { return set == LabelSet::Iemocap ? "iemocap" : "mosei"; }

inline LabelSet label_set_from_name(const std::string& name) {
    if (name == "iemocap") return LabelSet::Iemocap;
    if (name == "mosei") return LabelSet::Mosei;
    throw ConfigError("unknown label set: " + name);
}

// Six-class sigmoid probabilities with the label-set tag.
struct EmotionScores {
    std::array<double, 6> probs{};
    LabelSet labels = LabelSet::Iemocap;
};

// prob >= threshold => 1; threshold is clamped to [0, 1].
inline std::array<int, 6> predict_labels(const EmotionScores& scores, double threshold = 0.5) {
    const double t = std::clamp(threshold, 0.0, 1.0);
    std::array<int, 6> out{};
    for (size_t i = 0; i < 6; ++i) out[i] = scores.probs[i] >= t ? 1 : 0;
    return out;
}

struct FusionConfig {
    int feat_v = 128;  // vision feature width
    int d_a = 64;      // acoustic feature width (tower d)
    int d_t = 64;      // text feature width
    int d_f = 64;      // common fusion width
    int hidden = 128;
    int heads = 4;
    int max_len = 256;

    void validate() const {
        if (feat_v <= 0 || d_a <= 0 || d_t <= 0 || d_f <= 0 || hidden <= 0 || heads <= 0 || max_len <= 0)
            throw ConfigError("bad fusion configuration");
        if (d_f % heads != 0) throw ConfigError("fusion width must divide by heads");
    }
};

template <typename T>
struct SeqEncoderParams {
    Tensor<T> pos;  // max_len x d_f
    Tensor<T> wq, wk, wv, wo, ln1_g, ln1_b;
    Tensor<T> ffn_w1, ffn_b1, ffn_w2, ffn_b2, ln2_g, ln2_b;

    static SeqEncoderParams init(int d_f, int max_len, Rng& rng) {
        const size_t d = static_cast<size_t>(d_f);
        SeqEncoderParams p;
        p.pos = rng.normal_tensor<T>({static_cast<size_t>(max_len), d}, 0.02);
        p.wq = rng.normal_tensor<T>({d, d}, 0.02);
        p.wk = rng.normal_tensor<T>({d, d}, 0.02);
        p.wv = rng.normal_tensor<T>({d, d}, 0.02);
        p.wo = rng.normal_tensor<T>({d, d}, 0.02);
        p.ln1_g = Tensor<T>::full({d}, T(1));
        p.ln1_b = Tensor<T>({d});
        p.ffn_w1 = rng.normal_tensor<T>({d, 4 * d}, 0.02);
        p.ffn_b1 = Tensor<T>({4 * d});
        p.ffn_w2 = rng.normal_tensor<T>({4 * d, d}, 0.02);
        p.ffn_b2 = Tensor<T>({d});
        p.ln2_g = Tensor<T>::full({d}, T(1));
        p.ln2_b = Tensor<T>({d});
        return p;
    }

    template <typename Fn>
    void visit(const std::string& prefix, Fn&& fn) {
        fn(prefix + ".pos", pos);
        fn(prefix + ".wq", wq);
        fn(prefix + ".wk", wk);
        fn(prefix + ".wv", wv);
        fn(prefix + ".wo", wo);
        fn(prefix + ".ln1_g", ln1_g);
        fn(prefix + ".ln1_b", ln1_b);
        fn(prefix + ".ffn_w1", ffn_w1);
        fn(prefix + ".ffn_b1", ffn_b1);
        fn(prefix + ".ffn_w2", ffn_w2);
        fn(prefix + ".ffn_b2", ffn_b2);
        fn(prefix + ".ln2_g", ln2_g);
        fn(prefix + ".ln2_b", ln2_b);
    }
};

template <typename T>
struct FusionParams {
    Tensor<T> proj_v, proj_v_b, proj_a, proj_a_b, proj_t, proj_t_b;
    Tensor<T> null_v, null_a;  // learned stand-ins for absent modalities
    SeqEncoderParams<T> seq_v, seq_a;
    Tensor<T> modality_logits;  // 3: visual, acoustic, textual
    Tensor<T> head_w1, head_b1, head_w2, head_b2;

    static FusionParams init(const FusionConfig& cfg, Rng& rng) {
        cfg.validate();
        const size_t d = static_cast<size_t>(cfg.d_f);
        FusionParams p;
        p.proj_v = rng.normal_tensor<T>({static_cast<size_t>(cfg.feat_v), d}, std::sqrt(1.0 / cfg.feat_v));
        p.proj_v_b = Tensor<T>({d});
        p.proj_a = rng.normal_tensor<T>({static_cast<size_t>(cfg.d_a), d}, std::sqrt(1.0 / cfg.d_a));
        p.proj_a_b = Tensor<T>({d});
        p.proj_t = rng.normal_tensor<T>({static_cast<size_t>(cfg.d_t), d}, std::sqrt(1.0 / cfg.d_t));
        p.proj_t_b = Tensor<T>({d});
        p.null_v = rng.normal_tensor<T>({1, static_cast<size_t>(cfg.feat_v)}, 0.02);
        p.null_a = rng.normal_tensor<T>({1, static_cast<size_t>(cfg.d_a)}, 0.02);
        p.seq_v = SeqEncoderParams<T>::init(cfg.d_f, cfg.max_len, rng);
        p.seq_a = SeqEncoderParams<T>::init(cfg.d_f, cfg.max_len, rng);
        p.modality_logits = Tensor<T>({3});
        p.head_w1 = rng.normal_tensor<T>({3 * d, static_cast<size_t>(cfg.hidden)}, std::sqrt(2.0 / (3.0 * cfg.d_f)));
        p.head_b1 = Tensor<T>({static_cast<size_t>(cfg.hidden)});
        p.head_w2 = rng.normal_tensor<T>({static_cast<size_t>(cfg.hidden), 6}, std::sqrt(2.0 / cfg.hidden));
        p.head_b2 = Tensor<T>({6});
        return p;
    }

    template <typename Fn>
    void visit(const std::string& prefix, Fn&& fn) {
        fn(prefix + ".proj_v.w", proj_v);
        fn(prefix + ".proj_v.b", proj_v_b);
        fn(prefix + ".proj_a.w", proj_a);
        fn(prefix + ".proj_a.b", proj_a_b);
        fn(prefix + ".proj_t.w", proj_t);
        fn(prefix + ".proj_t.b", proj_t_b);
        fn(prefix + ".null_v", null_v);
        fn(prefix + ".null_a", null_a);
        seq_v.visit(prefix + ".seq_v", fn);
        seq_a.visit(prefix + ".seq_a", fn);
        fn(prefix + ".modality_logits", modality_logits);
        fn(prefix + ".head.w1", head_w1);
        fn(prefix + ".head.b1", head_b1);
        fn(prefix + ".head.w2", head_w2);
        fn(prefix + ".head.b2", head_b2);
    }
};

template <typename T>
struct SeqEncoderNodes {
    using Id = typename Graph<T>::NodeId;
    Id pos, wq, wk, wv, wo, ln1_g, ln1_b, ffn_w1, ffn_b1, ffn_w2, ffn_b2, ln2_g, ln2_b;

    static SeqEncoderNodes lift(Graph<T>& g, const SeqEncoderParams<T>& p, bool trainable) {
        return {g.leaf(p.pos, trainable),    g.leaf(p.wq, trainable),     g.leaf(p.wk, trainable),
                g.leaf(p.wv, trainable),     g.leaf(p.wo, trainable),     g.leaf(p.ln1_g, trainable),
                g.leaf(p.ln1_b, trainable),  g.leaf(p.ffn_w1, trainable), g.leaf(p.ffn_b1, trainable),
                g.leaf(p.ffn_w2, trainable), g.leaf(p.ffn_b2, trainable), g.leaf(p.ln2_g, trainable),
                g.leaf(p.ln2_b, trainable)};
    }
};

template <typename T>
struct FusionNodes {
    using Id = typename Graph<T>::NodeId;
    Id proj_v, proj_v_b, proj_a, proj_a_b, proj_t, proj_t_b, null_v, null_a;
    SeqEncoderNodes<T> seq_v, seq_a;
    Id modality_logits, head_w1, head_b1, head_w2, head_b2;

    static FusionNodes lift(Graph<T>& g, const FusionParams<T>& p, bool trainable) {
        FusionNodes n;
        n.proj_v = g.leaf(p.proj_v, trainable);
        n.proj_v_b = g.leaf(p.proj_v_b, trainable);
        n.proj_a = g.leaf(p.proj_a, trainable);
        n.proj_a_b = g.leaf(p.proj_a_b, trainable);
        n.proj_t = g.leaf(p.proj_t, trainable);
        n.proj_t_b = g.leaf(p.proj_t_b, trainable);
        n.null_v = g.leaf(p.null_v, trainable);
        n.null_a = g.leaf(p.null_a, trainable);
        n.seq_v = SeqEncoderNodes<T>::lift(g, p.seq_v, trainable);
        n.seq_a = SeqEncoderNodes<T>::lift(g, p.seq_a, trainable);
        n.modality_logits = g.leaf(p.modality_logits, trainable);
        n.head_w1 = g.leaf(p.head_w1, trainable);
        n.head_b1 = g.leaf(p.head_b1, trainable);
        n.head_w2 = g.leaf(p.head_w2, trainable);
        n.head_b2 = g.leaf(p.head_b2, trainable);
        return n;
    }
};

// One post-norm transformer encoder layer with learned positions:
// x = LN1(x + MSA(x)); x = LN2(x + FFN(x)).
template <typename T>
typename Graph<T>::NodeId encode_sequence(Graph<T>& g, typename Graph<T>::NodeId x, const SeqEncoderNodes<T>& n,
                                          int heads) {
    const size_t len = g.value(x).dim(0);
    if (len > g.value(n.pos).dim(0)) throw DimensionMismatch("sequence exceeds learned positions");
    x = g.add(x, g.slice_rows(n.pos, 0, len));
    auto attn = graph_mha(g, x, n.wq, n.wk, n.wv, n.wo, heads);
    x = g.layer_norm(g.add(x, attn), n.ln1_g, n.ln1_b, static_cast<T>(1e-5));
    auto h = g.relu(g.add_rowvec(g.matmul(x, n.ffn_w1), n.ffn_b1));
    auto ffn = g.add_rowvec(g.matmul(h, n.ffn_w2), n.ffn_b2);
    return g.layer_norm(g.add(x, ffn), n.ln2_g, n.ln2_b, static_cast<T>(1e-5));
}

// Project each modality to the common width, run the visual and acoustic
// sequence encoders (text arrives pre-encoded), mean-pool, scale by the
// softmax-normalized modality weights, concatenate, feed-forward to 6 logits.
template <typename T>
typename Graph<T>::NodeId fusion_graph_forward(Graph<T>& g, typename Graph<T>::NodeId visual,
                                               typename Graph<T>::NodeId acoustic, typename Graph<T>::NodeId textual,
                                               const FusionConfig& cfg, const FusionNodes<T>& n) {
    cfg.validate();
    const size_t d = static_cast<size_t>(cfg.d_f);
    auto v = g.add_rowvec(g.matmul(visual, n.proj_v), n.proj_v_b);
    auto a = g.add_rowvec(g.matmul(acoustic, n.proj_a), n.proj_a_b);
    auto t = g.add_rowvec(g.matmul(textual, n.proj_t), n.proj_t_b);
    v = encode_sequence(g, v, n.seq_v, cfg.heads);
    a = encode_sequence(g, a, n.seq_a, cfg.heads);
    auto weights = g.softmax(g.reshape(n.modality_logits, {1, 3}));
    auto pool = [&](typename Graph<T>::NodeId rows) { return g.reshape(g.col_mean(rows), {1, d}); };
    auto vw = g.mul_scalar(pool(v), g.slice_cols(weights, 0, 1));
    auto aw = g.mul_scalar(pool(a), g.slice_cols(weights, 1, 2));
    auto tw = g.mul_scalar(pool(t), g.slice_cols(weights, 2, 3));
    auto cat = g.concat_cols({vw, aw, tw});
    auto hid = g.relu(g.add_rowvec(g.matmul(cat, n.head_w1), n.head_b1));
    return g.add_rowvec(g.matmul(hid, n.head_w2), n.head_b2);  // 1 x 6 logits
}

template <typename T>
struct ModalityFeatures {
    Tensor<T> visual;    // n_v x feat_v
    Tensor<T> acoustic;  // n_a x d_a
    Tensor<T> textual;   // n_t x d_t
};

template <typename T>
std::pair<Tensor<T>, EmotionScores> fuse_and_predict(const ModalityFeatures<T>& m, const FusionConfig& cfg,
                                                     const FusionParams<T>& params, LabelSet set) {
    Graph<T> g(false);
    auto nodes = FusionNodes<T>::lift(g, params, false);
    auto logits =
        fusion_graph_forward(g, g.constant(m.visual), g.constant(m.acoustic), g.constant(m.textual), cfg, nodes);
    const Tensor<T>& lv = g.value(logits);
    Tensor<T> flat({6});
    for (size_t i = 0; i < 6; ++i) flat[i] = lv[i];
    const Tensor<T> probs = sigmoid(flat);
    EmotionScores scores;
    scores.labels = set;
    for (size_t i = 0; i < 6; ++i) scores.probs[i] = static_cast<double>(probs[i]);
    return {flat, scores};
}

}  // namespace fv2es
