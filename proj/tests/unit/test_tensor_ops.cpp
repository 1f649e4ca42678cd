// Copyright (c) 2026 the fv2es authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "fv2es/rng.hpp"
#include "fv2es/tensor_ops.hpp"

using namespace fv2es;

namespace {

// Naive triple-loop reference, kept independent of the library path.
TensorD matmul_oracle(const TensorD& a, const TensorD& b) {
    TensorD out({a.dim(0), b.dim(1)});
    for (size_t i = 0; i < a.dim(0); ++i)
        for (size_t j = 0; j < b.dim(1); ++j)
            for (size_t k = 0; k < a.dim(1); ++k) out.at2(i, j) += a.at2(i, k) * b.at2(k, j);
    return out;
}

// Direct quadruple-loop convolution over the zero-padded input.
TensorD conv_oracle(const TensorD& x, const TensorD& k, const TensorD& bias, int stride, int pad) {
    const size_t co = k.dim(0), ci = k.dim(1), ks = k.dim(2);
    const size_t oh = (x.dim(1) + 2 * pad - ks) / stride + 1;
    const size_t ow = (x.dim(2) + 2 * pad - ks) / stride + 1;
    TensorD out({co, oh, ow});
    for (size_t o = 0; o < co; ++o)
        for (size_t oy = 0; oy < oh; ++oy)
            for (size_t ox = 0; ox < ow; ++ox) {
                double acc = bias[o];
                for (size_t c = 0; c < ci; ++c)
                    for (size_t ky = 0; ky < ks; ++ky)
                        for (size_t kx = 0; kx < ks; ++kx) {
                            long iy = static_cast<long>(oy * stride + ky) - pad;
                            long ix = static_cast<long>(ox * stride + kx) - pad;
                            double xv = 0.0;
                            if (iy >= 0 && ix >= 0 && iy < static_cast<long>(x.dim(1)) && ix < static_cast<long>(x.dim(2)))
                                xv = x.at3(c, iy, ix);
                            acc += xv * k[((o * ci + c) * ks + ky) * ks + kx];
                        }
                out.at3(o, oy, ox) = acc;
            }
    return out;
}

TensorD pool_oracle(const TensorD& x, int k, int stride, int pad) {
    const size_t oh = (x.dim(1) + 2 * pad - k) / stride + 1;
    const size_t ow = (x.dim(2) + 2 * pad - k) / stride + 1;
    TensorD out({x.dim(0), oh, ow});
    for (size_t c = 0; c < x.dim(0); ++c)
        for (size_t oy = 0; oy < oh; ++oy)
            for (size_t ox = 0; ox < ow; ++ox) {
                double best = -1e300;
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx) {
                        long iy = static_cast<long>(oy) * stride + ky - pad;
                        long ix = static_cast<long>(ox) * stride + kx - pad;
                        if (iy < 0 || ix < 0 || iy >= static_cast<long>(x.dim(1)) || ix >= static_cast<long>(x.dim(2)))
                            continue;
                        best = std::max(best, x.at3(c, iy, ix));
                    }
                out.at3(c, oy, ox) = best;
            }
    return out;
}

// Brute-force single-head attention written directly from the definition.
TensorD attention_oracle(const TensorD& x, const MhaParams<double>& p) {
    const size_t n = x.dim(0), d = x.dim(1);
    TensorD q = matmul_oracle(x, p.wq), k = matmul_oracle(x, p.wk), v = matmul_oracle(x, p.wv);
    TensorD out({n, d});
    for (size_t i = 0; i < n; ++i) {
        std::vector<double> s(n);
        double mx = -1e300;
        for (size_t j = 0; j < n; ++j) {
            double dot = 0;
            for (size_t c = 0; c < d; ++c) dot += q.at2(i, c) * k.at2(j, c);
            s[j] = dot / std::sqrt(static_cast<double>(d));
            mx = std::max(mx, s[j]);
        }
        double z = 0;
        for (size_t j = 0; j < n; ++j) {
            s[j] = std::exp(s[j] - mx);
            z += s[j];
        }
        for (size_t j = 0; j < n; ++j)
            for (size_t c = 0; c < d; ++c) out.at2(i, c) += s[j] / z * v.at2(j, c);
    }
    return matmul_oracle(out, p.wo);
}

}  // namespace

TEST_CASE("matmul identity, annihilator, naive oracle") {
    TensorD eye({2, 2}, {1, 0, 0, 1});
    Rng rng(7);
    TensorD b = rng.uniform_tensor<double>({2, 3}, -1, 1);
    TensorD r = matmul(eye, b);
    for (size_t i = 0; i < b.numel(); ++i) CHECK(r[i] == b[i]);

    TensorD z({3, 4});
    TensorD c = rng.uniform_tensor<double>({4, 2}, -1, 1);
    TensorD zz = matmul(z, c);
    for (size_t i = 0; i < zz.numel(); ++i) CHECK(zz[i] == 0.0);

    TensorD a = rng.uniform_tensor<double>({5, 6}, -2, 2);
    TensorD d = rng.uniform_tensor<double>({6, 7}, -2, 2);
    TensorD got = matmul(a, d);
    TensorD want = matmul_oracle(a, d);
    for (size_t i = 0; i < got.numel(); ++i) CHECK(got[i] == want[i]);

    CHECK_THROWS_AS(matmul(a, c), DimensionMismatch);
}

TEST_CASE("conv2d identity, zero, naive oracle") {
    Rng rng(11);
    TensorD x = rng.uniform_tensor<double>({1, 4, 4}, -1, 1);
    TensorD k1({1, 1, 1, 1}, {1.0});
    TensorD b0({1});
    TensorD idout = conv2d(x, k1, b0, 1, 0);
    for (size_t i = 0; i < x.numel(); ++i) CHECK(idout[i] == x[i]);

    TensorD zk({3, 2, 3, 3});
    TensorD zb({3});
    TensorD x2 = rng.uniform_tensor<double>({2, 4, 4}, -1, 1);
    TensorD zout = conv2d(x2, zk, zb, 1, 1);
    for (size_t i = 0; i < zout.numel(); ++i) CHECK(zout[i] == 0.0);

    TensorD k = rng.uniform_tensor<double>({3, 2, 3, 3}, -1, 1);
    TensorD b = rng.uniform_tensor<double>({3}, -1, 1);
    TensorD got = conv2d(x2, k, b, 1, 1);
    TensorD want = conv_oracle(x2, k, b, 1, 1);
    REQUIRE(got.shape() == want.shape());
    for (size_t i = 0; i < got.numel(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));

    CHECK_THROWS_AS(conv2d(x, k, b, 1, 1), DimensionMismatch);
}

TEST_CASE("conv2d and maxpool2d match oracles on random small instances") {
    Rng rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        const size_t ci = 1 + rng.index(3), co = 1 + rng.index(3);
        const size_t h = 3 + rng.index(6), w = 3 + rng.index(6);
        const int ks = rng.index(2) ? 3 : 1;
        const int stride = 1 + static_cast<int>(rng.index(2));
        const int pad = static_cast<int>(rng.index(2));
        if (static_cast<long>(h) + 2 * pad < ks || static_cast<long>(w) + 2 * pad < ks) continue;
        TensorD x = rng.uniform_tensor<double>({ci, h, w}, -2, 2);
        TensorD k = rng.uniform_tensor<double>({co, ci, static_cast<size_t>(ks), static_cast<size_t>(ks)}, -2, 2);
        TensorD b = rng.uniform_tensor<double>({co}, -2, 2);
        TensorD got = conv2d(x, k, b, stride, pad);
        TensorD want = conv_oracle(x, k, b, stride, pad);
        REQUIRE(got.shape() == want.shape());
        for (size_t i = 0; i < got.numel(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));

        if (pad < ks) {  // a window made entirely of padding has no value
            TensorD pg = maxpool2d(x, ks, stride, pad);
            TensorD pw = pool_oracle(x, ks, stride, pad);
            REQUIRE(pg.shape() == pw.shape());
            for (size_t i = 0; i < pg.numel(); ++i) CHECK(pg[i] == pw[i]);
        }
    }
}

TEST_CASE("output shapes follow the window formula") {
    Rng rng(5);
    for (int ks : {1, 3})
        for (int stride : {1, 2})
            for (int pad : {0, 1}) {
                const size_t h = 8, w = 6;
                TensorD x = rng.uniform_tensor<double>({2, h, w}, -1, 1);
                TensorD k = rng.uniform_tensor<double>({4, 2, static_cast<size_t>(ks), static_cast<size_t>(ks)}, -1, 1);
                TensorD b({4});
                TensorD y = conv2d(x, k, b, stride, pad);
                CHECK(y.dim(1) == (h + 2 * pad - ks) / stride + 1);
                CHECK(y.dim(2) == (w + 2 * pad - ks) / stride + 1);
                if (pad < ks) {
                    TensorD p = maxpool2d(x, ks, stride, pad);
                    CHECK(p.dim(1) == (h + 2 * pad - ks) / stride + 1);
                    CHECK(p.dim(2) == (w + 2 * pad - ks) / stride + 1);
                } else {
                    CHECK_THROWS_AS(maxpool2d(x, ks, stride, pad), DimensionMismatch);
                }
            }
}

TEST_CASE("maxpool constant and monotone cases") {
    TensorD c = TensorD::full({1, 4, 4}, 2.5);
    TensorD pc = maxpool2d(c, 2, 2, 0);
    for (size_t i = 0; i < pc.numel(); ++i) CHECK(pc[i] == 2.5);

    TensorD inc({1, 4, 4});
    for (size_t i = 0; i < 16; ++i) inc[i] = static_cast<double>(i);
    TensorD pi = maxpool2d(inc, 2, 2, 0);
    CHECK(pi.at3(0, 0, 0) == 5.0);
    CHECK(pi.at3(0, 0, 1) == 7.0);
    CHECK(pi.at3(0, 1, 0) == 13.0);
    CHECK(pi.at3(0, 1, 1) == 15.0);
}

TEST_CASE("batch_norm_eval identity, constant-beta, scalar oracle") {
    Rng rng(3);
    TensorD x = rng.uniform_tensor<double>({3, 2, 2}, -2, 2);

    auto p = BatchNormParams<double>::identity(3);
    p.epsilon = 1e-12;
    TensorD y = batch_norm_eval(x, p);
    for (size_t i = 0; i < x.numel(); ++i) CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-9));

    auto pz = BatchNormParams<double>::identity(3);
    pz.gamma = TensorD({3});
    pz.beta = TensorD({3}, {1.0, -2.0, 0.5});
    TensorD yb = batch_norm_eval(x, pz);
    for (size_t c = 0; c < 3; ++c)
        for (size_t i = 0; i < 4; ++i) CHECK(yb[c * 4 + i] == pz.beta[c]);

    BatchNormParams<double> pr;
    pr.gamma = rng.uniform_tensor<double>({3}, 0.5, 2);
    pr.beta = rng.uniform_tensor<double>({3}, -1, 1);
    pr.running_mean = rng.uniform_tensor<double>({3}, -1, 1);
    pr.running_var = rng.uniform_tensor<double>({3}, 0.1, 2);
    pr.epsilon = 1e-5;
    TensorD yr = batch_norm_eval(x, pr);
    for (size_t c = 0; c < 3; ++c)
        for (size_t i = 0; i < 4; ++i) {
            const double want =
                (x[c * 4 + i] - pr.running_mean[c]) / std::sqrt(pr.running_var[c] + pr.epsilon) * pr.gamma[c] + pr.beta[c];
            CHECK(yr[c * 4 + i] == doctest::Approx(want).epsilon(1e-12));
        }
}

TEST_CASE("layer_norm constant row, zero-mean row, scalar oracle") {
    auto p = LayerNormParams<double>::identity(4);
    TensorD c = TensorD::full({4}, 3.0);
    TensorD yc = layer_norm(c, p);
    for (size_t i = 0; i < 4; ++i) CHECK(yc[i] == doctest::Approx(0.0));

    auto p2 = LayerNormParams<double>::identity(2);
    p2.epsilon = 1e-14;
    TensorD pm({2}, {-1.0, 1.0});
    TensorD ypm = layer_norm(pm, p2);
    CHECK(ypm[0] == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(ypm[1] == doctest::Approx(1.0).epsilon(1e-6));

    Rng rng(17);
    TensorD row = rng.uniform_tensor<double>({6}, -3, 3);
    LayerNormParams<double> pr;
    pr.gamma = rng.uniform_tensor<double>({6}, 0.5, 2);
    pr.beta = rng.uniform_tensor<double>({6}, -1, 1);
    TensorD yr = layer_norm(row, pr);
    double mean = 0;
    for (size_t i = 0; i < 6; ++i) mean += row[i];
    mean /= 6;
    double var = 0;
    for (size_t i = 0; i < 6; ++i) var += (row[i] - mean) * (row[i] - mean);
    var /= 6;
    for (size_t i = 0; i < 6; ++i) {
        const double want = (row[i] - mean) / std::sqrt(var + pr.epsilon) * pr.gamma[i] + pr.beta[i];
        CHECK(yr[i] == doctest::Approx(want).epsilon(1e-6));
    }
}

TEST_CASE("gelu fixed points and erf oracle") {
    TensorD z = TensorD::scalar(0.0);
    CHECK(gelu(z)[0] == 0.0);
    TensorD ten = TensorD::scalar(10.0);
    CHECK(gelu(ten)[0] == doctest::Approx(10.0).epsilon(1e-7));
    TensorD one = TensorD::scalar(1.0);
    // Series evaluation of Phi(1) = (1 + erf(1/sqrt 2)) / 2 via erf's Taylor
    // expansion, independent of std::erf.
    const double t = 1.0 / std::sqrt(2.0);
    double term = t, series = t;
    for (int n = 1; n < 40; ++n) {
        term *= -t * t / n;
        series += term / (2 * n + 1);
    }
    const double erf1 = 2.0 / std::sqrt(3.14159265358979323846) * series;
    const double want = 1.0 * 0.5 * (1.0 + erf1);
    CHECK(gelu(one)[0] == doctest::Approx(want).epsilon(1e-6));
}

TEST_CASE("relu clamps negatives and preserves shape") {
    TensorD x({2, 2}, {-3.0, 5.0, 0.0, -0.25});
    TensorD y = relu(x);
    CHECK(y.shape() == x.shape());
    CHECK(y[0] == 0.0);
    CHECK(y[1] == 5.0);
    CHECK(y[2] == 0.0);
    CHECK(y[3] == 0.0);
}

TEST_CASE("softmax fixed points and shift invariance") {
    TensorD u({3}, {1.0, 1.0, 1.0});
    TensorD su = softmax(u);
    for (size_t i = 0; i < 3; ++i) CHECK(su[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    TensorD v({2}, {0.0, std::log(3.0)});
    TensorD sv = softmax(v);
    CHECK(sv[0] == doctest::Approx(0.25).epsilon(1e-9));
    CHECK(sv[1] == doctest::Approx(0.75).epsilon(1e-9));

    Rng rng(29);
    TensorD r = rng.uniform_tensor<double>({5}, -4, 4);
    TensorD shifted = r;
    for (size_t i = 0; i < 5; ++i) shifted[i] += 11.5;
    TensorD a = softmax(r), b = softmax(shifted);
    double sum = 0;
    for (size_t i = 0; i < 5; ++i) {
        CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-6));
        sum += a[i];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("multi_head_attention single token, symmetry, brute-force oracle") {
    Rng rng(41);
    const size_t d = 4;
    MhaParams<double> p;
    p.wq = rng.uniform_tensor<double>({d, d}, -1, 1);
    p.wk = rng.uniform_tensor<double>({d, d}, -1, 1);
    p.wv = rng.uniform_tensor<double>({d, d}, -1, 1);
    p.wo = rng.uniform_tensor<double>({d, d}, -1, 1);

    TensorD tok = rng.uniform_tensor<double>({1, d}, -1, 1);
    std::vector<TensorD> maps;
    TensorD out1 = multi_head_attention(tok, p, 1, &maps);
    REQUIRE(maps.size() == 1);
    CHECK(maps[0].numel() == 1);
    CHECK(maps[0][0] == doctest::Approx(1.0).epsilon(1e-12));
    TensorD want1 = matmul(matmul(tok, p.wv), p.wo);
    for (size_t i = 0; i < d; ++i) CHECK(out1[i] == doctest::Approx(want1[i]).epsilon(1e-9));

    // All tokens identical: every attention row is uniform 1/n.
    TensorD same({3, d});
    for (size_t r = 0; r < 3; ++r)
        for (size_t c = 0; c < d; ++c) same.at2(r, c) = tok[c];
    maps.clear();
    multi_head_attention(same, p, 2, &maps);
    for (const auto& m : maps)
        for (size_t i = 0; i < m.numel(); ++i) CHECK(m[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-9));

    TensorD x = rng.uniform_tensor<double>({3, d}, -1, 1);
    TensorD got = multi_head_attention(x, p, 1);
    TensorD want = attention_oracle(x, p);
    for (size_t i = 0; i < got.numel(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-6));

    CHECK_THROWS_AS(multi_head_attention(x, p, 3), DimensionMismatch);
}

TEST_CASE("attention weights stay row-stochastic on random inputs") {
    Rng rng(53);
    for (int trial = 0; trial < 20; ++trial) {
        const size_t n = 1 + rng.index(6);
        const size_t heads = 1 + rng.index(2);
        const size_t d = heads * (1 + rng.index(3));
        MhaParams<double> p;
        p.wq = rng.uniform_tensor<double>({d, d}, -2, 2);
        p.wk = rng.uniform_tensor<double>({d, d}, -2, 2);
        p.wv = rng.uniform_tensor<double>({d, d}, -2, 2);
        p.wo = rng.uniform_tensor<double>({d, d}, -2, 2);
        TensorD x = rng.uniform_tensor<double>({n, d}, -2, 2);
        std::vector<TensorD> maps;
        multi_head_attention(x, p, static_cast<int>(heads), &maps);
        REQUIRE(maps.size() == heads);
        for (const auto& m : maps)
            for (size_t r = 0; r < n; ++r) {
                double sum = 0;
                for (size_t c = 0; c < n; ++c) {
                    CHECK(m.at2(r, c) >= 0.0);
                    CHECK(m.at2(r, c) <= 1.0);
                    sum += m.at2(r, c);
                }
                CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
            }
    }
}

TEST_CASE("ops are bit-deterministic across repeated evaluation") {
    Rng rng(61);
    TensorD x = rng.uniform_tensor<double>({2, 6, 6}, -1, 1);
    TensorD k = rng.uniform_tensor<double>({3, 2, 3, 3}, -1, 1);
    TensorD b = rng.uniform_tensor<double>({3}, -1, 1);
    TensorD a1 = conv2d(x, k, b, 2, 1);
    TensorD a2 = conv2d(x, k, b, 2, 1);
    for (size_t i = 0; i < a1.numel(); ++i) CHECK(a1[i] == a2[i]);

    TensorF xf = rng.uniform_tensor<float>({4, 4}, -1, 1);
    TensorF s1 = softmax(xf);
    TensorF s2 = softmax(xf);
    for (size_t i = 0; i < s1.numel(); ++i) CHECK(s1[i] == s2[i]);
}

TEST_CASE("non-finite inputs are rejected at op boundaries") {
    TensorD bad({2}, {1.0, std::numeric_limits<double>::infinity()});
    TensorD one({2}, {1.0, 1.0});
    CHECK_THROWS_AS(add(bad, one), NonFinite);
}
