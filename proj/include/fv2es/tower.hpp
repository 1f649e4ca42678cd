// Copyright (c) 2026 the fv2es authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "fv2es/graph.hpp"
#include "fv2es/rng.hpp"
#include "fv2es/tensor_io.hpp"

namespace fv2es {

// Hierarchical-attention spectrum tower: the square spectrum splits into a
// 4x4 grid of patches (blocks); each block holds sub*sub embedded sub-patch
// tokens that attend only to each other; 2x2 block neighborhoods merge
// through conv + channel layer-norm + max-pool, giving the 16 -> 4 -> 1
// pyramid with a transformer layer at every level.
struct SpectrumTowerConfig {
    int side = 64;
    int d = 64;
    int heads = 4;
    int sub = 4;

    void validate() const {
        if (side <= 0 || side % 4 != 0) throw BadSide("spectrum side must be a positive multiple of 4");
        const int patch = side / 4;
        if (sub <= 0 || patch % sub != 0) throw ConfigError("sub-patch grid must divide the patch side");
        if (d <= 0 || heads <= 0 || d % heads != 0) throw ConfigError("embedding width must divide by heads");
    }

    int patch_side() const { return side / 4; }
    int subpatch_side() const { return patch_side() / sub; }
    int token_pixels() const { return subpatch_side() * subpatch_side(); }
    int tokens_per_block() const { return sub * sub; }
};

template <typename T>
struct TowerLayerParams {
    Tensor<T> wq, wk, wv, wo, ln_g, ln_b;
};

template <typename T>
struct TowerAggParams {
    Tensor<T> conv;  // d x d x 3 x 3, no bias: the following layer norm carries the affine
    Tensor<T> ln_g, ln_b;
};

template <typename T>
struct TowerParams {
    Tensor<T> w_embed, b_embed, pos;
    std::vector<TowerLayerParams<T>> layers;  // 3
    std::vector<TowerAggParams<T>> aggs;      // 2

    static TowerParams init(const SpectrumTowerConfig& cfg, Rng& rng) {
        cfg.validate();
        const size_t d = static_cast<size_t>(cfg.d);
        const size_t p = static_cast<size_t>(cfg.token_pixels());
        const size_t n = static_cast<size_t>(cfg.tokens_per_block());
        TowerParams tp;
        tp.w_embed = rng.normal_tensor<T>({p, d}, 0.02);
        tp.b_embed = Tensor<T>({d});
        tp.pos = rng.normal_tensor<T>({n, d}, 0.02);
        for (int l = 0; l < 3; ++l) {
            TowerLayerParams<T> lp;
            lp.wq = rng.normal_tensor<T>({d, d}, 0.02);
            lp.wk = rng.normal_tensor<T>({d, d}, 0.02);
            lp.wv = rng.normal_tensor<T>({d, d}, 0.02);
            lp.wo = rng.normal_tensor<T>({d, d}, 0.02);
            lp.ln_g = Tensor<T>::full({d}, T(1));
            lp.ln_b = Tensor<T>({d});
            tp.layers.push_back(std::move(lp));
        }
        for (int a = 0; a < 2; ++a) {
            TowerAggParams<T> ap;
            ap.conv = rng.normal_tensor<T>({d, d, 3, 3}, std::sqrt(2.0 / (9.0 * static_cast<double>(d))));
            ap.ln_g = Tensor<T>::full({d}, T(1));
            ap.ln_b = Tensor<T>({d});
            tp.aggs.push_back(std::move(ap));
        }
        return tp;
    }

    template <typename Fn>
    void visit(const std::string& prefix, Fn&& fn) {
        fn(prefix + ".embed.w", w_embed);
        fn(prefix + ".embed.b", b_embed);
        fn(prefix + ".pos", pos);
        for (size_t l = 0; l < layers.size(); ++l) {
            const std::string lp = prefix + ".layer" + std::to_string(l + 1);
            fn(lp + ".wq", layers[l].wq);
            fn(lp + ".wk", layers[l].wk);
            fn(lp + ".wv", layers[l].wv);
            fn(lp + ".wo", layers[l].wo);
            fn(lp + ".ln_g", layers[l].ln_g);
            fn(lp + ".ln_b", layers[l].ln_b);
        }
        for (size_t a = 0; a < aggs.size(); ++a) {
            const std::string ap = prefix + ".agg" + std::to_string(a + 1);
            fn(ap + ".conv", aggs[a].conv);
            fn(ap + ".ln_g", aggs[a].ln_g);
            fn(ap + ".ln_b", aggs[a].ln_b);
        }
    }
};

// Row-stochastic n x n attention matrices per (layer, block), head-averaged.
template <typename T>
struct AttentionMaps {
    std::vector<std::vector<Tensor<T>>> layers;  // [3][blocks: 16, 4, 1]
};

template <typename T>
struct TowerNodes {
    using Id = typename Graph<T>::NodeId;
    Id w_embed, b_embed, pos;
    struct Layer {
        Id wq, wk, wv, wo, ln_g, ln_b;
    };
    struct Agg {
        Id conv, ln_g, ln_b;
    };
    std::vector<Layer> layers;
    std::vector<Agg> aggs;

    static TowerNodes lift(Graph<T>& g, const TowerParams<T>& p, bool trainable) {
        TowerNodes n;
        n.w_embed = g.leaf(p.w_embed, trainable);
        n.b_embed = g.leaf(p.b_embed, trainable);
        n.pos = g.leaf(p.pos, trainable);
        for (const auto& l : p.layers)
            n.layers.push_back({g.leaf(l.wq, trainable), g.leaf(l.wk, trainable), g.leaf(l.wv, trainable),
                                g.leaf(l.wo, trainable), g.leaf(l.ln_g, trainable), g.leaf(l.ln_b, trainable)});
        for (const auto& a : p.aggs)
            n.aggs.push_back({g.leaf(a.conv, trainable), g.leaf(a.ln_g, trainable), g.leaf(a.ln_b, trainable)});
        return n;
    }
};

namespace tower_detail {

// Index map: (block-major token matrix rows) x (flattened sub-patch pixels)
// gathered from the side x side spectrum in raster block order.
inline std::shared_ptr<std::vector<size_t>> partition_index(const SpectrumTowerConfig& cfg) {
    const size_t side = cfg.side, S = cfg.patch_side(), sub = cfg.sub, ps = cfg.subpatch_side();
    auto idx = std::make_shared<std::vector<size_t>>();
    idx->reserve(16 * cfg.tokens_per_block() * cfg.token_pixels());
    for (size_t by = 0; by < 4; ++by)
        for (size_t bx = 0; bx < 4; ++bx)
            for (size_t sy = 0; sy < sub; ++sy)
                for (size_t sx = 0; sx < sub; ++sx)
                    for (size_t py = 0; py < ps; ++py)
                        for (size_t px = 0; px < ps; ++px)
                            idx->push_back((by * S + sy * ps + py) * side + (bx * S + sx * ps + px));
    return idx;
}

// Gathers a d x (2*sub) x (2*sub) channel map for one merged 2x2 block
// neighborhood out of the row-concatenation of all block token matrices.
inline std::shared_ptr<std::vector<size_t>> merge_index(int grid, int gy, int gx, int sub, int d) {
    const size_t n = static_cast<size_t>(sub) * sub;
    auto idx = std::make_shared<std::vector<size_t>>();
    idx->reserve(static_cast<size_t>(d) * 2 * sub * 2 * sub);
    for (int c = 0; c < d; ++c)
        for (int y = 0; y < 2 * sub; ++y)
            for (int x = 0; x < 2 * sub; ++x) {
                const int block = (2 * gy + y / sub) * grid + (2 * gx + x / sub);
                const int token = (y % sub) * sub + (x % sub);
                idx->push_back((static_cast<size_t>(block) * n + token) * d + c);
            }
    return idx;
}

inline std::shared_ptr<std::vector<size_t>> channels_last_index(int d, int h, int w) {
    auto idx = std::make_shared<std::vector<size_t>>();
    idx->reserve(static_cast<size_t>(d) * h * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < d; ++c) idx->push_back((static_cast<size_t>(c) * h + y) * w + x);
    return idx;
}

inline std::shared_ptr<std::vector<size_t>> channels_first_index(int d, int h, int w) {
    auto idx = std::make_shared<std::vector<size_t>>();
    idx->reserve(static_cast<size_t>(d) * h * w);
    for (int c = 0; c < d; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) idx->push_back((static_cast<size_t>(y) * w + x) * d + c);
    return idx;
}

// Pooled d x sub x sub map back to sub^2 x d tokens.
inline std::shared_ptr<std::vector<size_t>> tokens_index(int d, int sub) {
    auto idx = std::make_shared<std::vector<size_t>>();
    idx->reserve(static_cast<size_t>(sub) * sub * d);
    for (int y = 0; y < sub; ++y)
        for (int x = 0; x < sub; ++x)
            for (int c = 0; c < d; ++c) idx->push_back((static_cast<size_t>(c) * sub + y) * sub + x);
    return idx;
}

}  // namespace tower_detail

// Layer-1 partition: 16 token matrices (sub^2 x d), raster block order, each
// token linearly embedded with a shared learned positional embedding added.
template <typename T>
std::vector<typename Graph<T>::NodeId> tower_partition(Graph<T>& g, typename Graph<T>::NodeId spec,
                                                       const SpectrumTowerConfig& cfg, const TowerNodes<T>& nodes) {
    cfg.validate();
    const auto& sv = g.value(spec);
    if (sv.rank() != 2 || sv.dim(0) != static_cast<size_t>(cfg.side) || sv.dim(1) != static_cast<size_t>(cfg.side))
        throw BadShape("spectrum must be side x side");
    const size_t n = cfg.tokens_per_block(), p = cfg.token_pixels();
    const auto flat = g.gather(spec, tower_detail::partition_index(cfg), {16 * n, p});
    const auto embedded = g.add_rowvec(g.matmul(flat, nodes.w_embed), nodes.b_embed);
    std::vector<typename Graph<T>::NodeId> blocks;
    blocks.reserve(16);
    for (size_t b = 0; b < 16; ++b) blocks.push_back(g.add(g.slice_rows(embedded, b * n, (b + 1) * n), nodes.pos));
    return blocks;
}

// One tower transformer layer: GELU(LN(x + MSA(x))); no feed-forward sublayer.
template <typename T>
typename Graph<T>::NodeId tower_transformer_layer(Graph<T>& g, typename Graph<T>::NodeId tokens,
                                                  const typename TowerNodes<T>::Layer& l, int heads,
                                                  Tensor<T>* capture = nullptr) {
    const auto msa = graph_mha(g, tokens, l.wq, l.wk, l.wv, l.wo, heads, capture);
    const auto res = g.add(tokens, msa);
    return g.gelu(g.layer_norm(res, l.ln_g, l.ln_b, static_cast<T>(1e-5)));
}

// Merge 2x2 block neighborhoods: tile token maps, 3x3 conv (stride 1 pad 1),
// layer norm over channels, 3x3 max pool (stride 2 pad 1), re-tokenize.
template <typename T>
std::vector<typename Graph<T>::NodeId> tower_aggregate(Graph<T>& g,
                                                       const std::vector<typename Graph<T>::NodeId>& blocks,
                                                       const SpectrumTowerConfig& cfg,
                                                       const typename TowerNodes<T>::Agg& agg) {
    const int grid = blocks.size() == 16 ? 4 : blocks.size() == 4 ? 2 : 0;
    if (grid == 0) throw BadLayer("aggregate expects a 4x4 or 2x2 block grid, got " + std::to_string(blocks.size()));
    const int sub = cfg.sub, d = cfg.d;
    const auto all = g.concat_rows(blocks);
    std::vector<typename Graph<T>::NodeId> merged;
    merged.reserve(static_cast<size_t>(grid / 2) * (grid / 2));
    const auto cl = tower_detail::channels_last_index(d, 2 * sub, 2 * sub);
    const auto cf = tower_detail::channels_first_index(d, 2 * sub, 2 * sub);
    const auto tok = tower_detail::tokens_index(d, sub);
    for (int gy = 0; gy < grid / 2; ++gy)
        for (int gx = 0; gx < grid / 2; ++gx) {
            const auto map = g.gather(all, tower_detail::merge_index(grid, gy, gx, sub, d),
                                      {static_cast<size_t>(d), static_cast<size_t>(2 * sub), static_cast<size_t>(2 * sub)});
            const auto conv = g.conv2d(map, agg.conv, -1, 1, 1);
            const auto rows = g.gather(conv, cl, {static_cast<size_t>(2 * sub) * (2 * sub), static_cast<size_t>(d)});
            const auto normed = g.layer_norm(rows, agg.ln_g, agg.ln_b, static_cast<T>(1e-5));
            const auto back = g.gather(normed, cf,
                                       {static_cast<size_t>(d), static_cast<size_t>(2 * sub), static_cast<size_t>(2 * sub)});
            const auto pooled = g.maxpool2d(back, 3, 2, 1);
            merged.push_back(g.gather(pooled, tok, {static_cast<size_t>(sub) * sub, static_cast<size_t>(d)}));
        }
    return merged;
}

// Full pyramid; returns the d-dimensional acoustic feature node and fills
// the per-layer attention maps when `maps` is non-null.
template <typename T>
typename Graph<T>::NodeId tower_forward(Graph<T>& g, typename Graph<T>::NodeId spec, const SpectrumTowerConfig& cfg,
                                        const TowerNodes<T>& nodes, AttentionMaps<T>* maps = nullptr) {
    if (maps) maps->layers.assign(3, {});
    auto blocks = tower_partition(g, spec, cfg, nodes);
    for (int layer = 0; layer < 3; ++layer) {
        std::vector<typename Graph<T>::NodeId> out;
        out.reserve(blocks.size());
        for (auto b : blocks) {
            Tensor<T> capture;
            out.push_back(tower_transformer_layer(g, b, nodes.layers[layer], cfg.heads, maps ? &capture : nullptr));
            if (maps) maps->layers[layer].push_back(std::move(capture));
        }
        blocks = std::move(out);
        if (layer < 2) blocks = tower_aggregate(g, blocks, cfg, nodes.aggs[layer]);
    }
    if (blocks.size() != 1) throw BadLayer("pyramid did not converge to one block");
    return g.col_mean(blocks[0]);
}

// Pure-tensor convenience wrapper.
template <typename T>
Tensor<T> tower_forward_pure(const Tensor<T>& spec, const SpectrumTowerConfig& cfg, const TowerParams<T>& params,
                             AttentionMaps<T>* maps = nullptr) {
    Graph<T> g(false);
    auto nodes = TowerNodes<T>::lift(g, params, false);
    const auto out = tower_forward(g, g.constant(spec), cfg, nodes, maps);
    return g.value(out);
}

// One FVT1 tensor plus one PGM rendering per (layer, block).
template <typename T>
void export_attention(const AttentionMaps<T>& maps, const std::filesystem::path& dir) {
    if (maps.layers.empty()) throw BadShape("attention maps not populated");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string());
    for (size_t l = 0; l < maps.layers.size(); ++l) {
        for (size_t b = 0; b < maps.layers[l].size(); ++b) {
            std::string stem = "layer" + std::to_string(l + 1) + "_block" + (b < 10 ? "0" : "") + std::to_string(b);
            save_fvt1(dir / (stem + ".fvt"), maps.layers[l][b]);
            save_pgm(dir / (stem + ".pgm"), maps.layers[l][b]);
        }
    }
}

}  // namespace fv2es
