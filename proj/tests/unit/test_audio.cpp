// Copyright (c) 2026 the fv2es authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "fv2es/audio.hpp"
#include "fv2es/rng.hpp"
#include "fv2es/tensor_io.hpp"
#include "fv2es/wav.hpp"

using namespace fv2es;
namespace fs = std::filesystem;

namespace {

Waveform tone(double freq, double seconds, int sr, double amplitude = 0.5) {
    Waveform w;
    w.sample_rate = sr;
    const size_t n = static_cast<size_t>(seconds * sr);
    w.samples.resize(n);
    for (size_t i = 0; i < n; ++i)
        w.samples[i] = static_cast<float>(amplitude * std::cos(2.0 * 3.14159265358979323846 * freq * i / sr));
    return w;
}

// Naive O(n^2) DFT of one Hann-windowed frame.
std::vector<double> dft_power_oracle(const std::vector<float>& samples, int n_fft) {
    std::vector<double> out(n_fft / 2 + 1);
    for (int k = 0; k <= n_fft / 2; ++k) {
        double re = 0, im = 0;
        for (int t = 0; t < n_fft; ++t) {
            const double w = 0.5 - 0.5 * std::cos(2.0 * 3.14159265358979323846 * t / n_fft);
            const double v = samples[t] * w;
            const double ang = -2.0 * 3.14159265358979323846 * k * t / n_fft;
            re += v * std::cos(ang);
            im += v * std::sin(ang);
        }
        out[k] = re * re + im * im;
    }
    return out;
}

}  // namespace

TEST_CASE("stft_power silence, frame count, bin-centered cosine") {
    Waveform silence;
    silence.sample_rate = 16000;
    silence.samples.assign(16000, 0.0f);
    TensorD p = stft_power<double>(silence, 1024, 256);
    CHECK(p.dim(0) == 513);
    CHECK(p.dim(1) == 59);  // floor((16000-1024)/256)+1
    for (size_t i = 0; i < p.numel(); ++i) CHECK(p[i] == 0.0);

    const int sr = 16000, n_fft = 1024, k = 40;
    Waveform cos_wave = tone(static_cast<double>(k) * sr / n_fft, 0.25, sr);
    TensorD cp = stft_power<double>(cos_wave, n_fft, 256);
    for (size_t f = 0; f < cp.dim(1); ++f) {
        size_t argmax = 0;
        double best = -1;
        for (size_t b = 0; b < cp.dim(0); ++b)
            if (cp.at2(b, f) > best) {
                best = cp.at2(b, f);
                argmax = b;
            }
        CHECK(argmax == static_cast<size_t>(k));
    }

    Waveform shorty;
    shorty.sample_rate = 16000;
    shorty.samples.assign(512, 0.1f);
    CHECK_THROWS_AS(stft_power<double>(shorty, 1024, 256), TooShort);
}

TEST_CASE("stft_power matches a naive DFT oracle") {
    Rng rng(31);
    Waveform w;
    w.sample_rate = 8000;
    w.samples.resize(200);
    for (auto& s : w.samples) s = static_cast<float>(rng.uniform(-0.8, 0.8));
    const int n_fft = 64, hop = 32;
    TensorD got = stft_power<double>(w, n_fft, hop);
    for (size_t f = 0; f < got.dim(1); ++f) {
        std::vector<float> frame(w.samples.begin() + f * hop, w.samples.begin() + f * hop + n_fft);
        auto want = dft_power_oracle(frame, n_fft);
        for (size_t b = 0; b < got.dim(0); ++b) CHECK(got.at2(b, f) == doctest::Approx(want[b]).epsilon(1e-8));
    }
}

TEST_CASE("mel filterbank triangles, centers, and hand-computed positions") {
    const int n_mels = 4, n_fft = 64, sr = 8000;
    TensorF fb = mel_filterbank<float>(n_mels, n_fft, sr);
    REQUIRE(fb.dim(0) == 4);
    REQUIRE(fb.dim(1) == 33);

    auto centers = mel_filter_centers(n_mels, sr);
    for (int m = 1; m < n_mels; ++m) CHECK(centers[m] > centers[m - 1]);

    // Hand inversion of the HTK mel formula: centers at i/(n+1) of mel(sr/2).
    const double mel_max = 2595.0 * std::log10(1.0 + 4000.0 / 700.0);
    for (int m = 0; m < n_mels; ++m) {
        const double want = 700.0 * (std::pow(10.0, mel_max * (m + 1) / 5.0 / 2595.0) - 1.0);
        CHECK(centers[m] == doctest::Approx(want).epsilon(1e-12));
    }

    for (int m = 0; m < n_mels; ++m) {
        // Exactly one maximal bin and zero weight outside the triangle.
        size_t argmax = 0;
        float best = -1;
        int max_count = 0;
        double row_sum = 0;
        for (size_t k = 0; k < fb.dim(1); ++k) {
            CHECK(fb.at2(m, k) >= 0.0f);
            row_sum += fb.at2(m, k);
            if (fb.at2(m, k) > best) {
                best = fb.at2(m, k);
                argmax = k;
            }
        }
        for (size_t k = 0; k < fb.dim(1); ++k)
            if (fb.at2(m, k) == best) ++max_count;
        CHECK(max_count == 1);
        CHECK(row_sum > 0.0);
        const double left = m == 0 ? 0.0 : centers[m - 1];
        const double right = m == n_mels - 1 ? sr / 2.0 : centers[m + 1];
        for (size_t k = 0; k < fb.dim(1); ++k) {
            const double f = static_cast<double>(k) * sr / n_fft;
            if (f <= left || f >= right) CHECK(fb.at2(m, k) == 0.0f);
        }
        (void)argmax;
    }

    // Adjacent filters overlap: between consecutive centers some bin carries
    // weight from both triangles.
    TensorF fb64 = mel_filterbank<float>(8, 256, 8000);
    auto c8 = mel_filter_centers(8, 8000);
    for (int m = 0; m + 1 < 8; ++m) {
        bool overlap = false;
        for (size_t k = 0; k < fb64.dim(1); ++k)
            if (fb64.at2(m, k) > 0 && fb64.at2(m + 1, k) > 0) overlap = true;
        CHECK(overlap);
    }
}

TEST_CASE("mel_spectrogram silence floor, tonal argmax, power law") {
    MelConfig cfg;
    cfg.sample_rate = 16000;
    cfg.n_fft = 1024;
    cfg.hop = 256;
    cfg.n_mels = 64;

    Waveform silence;
    silence.sample_rate = 16000;
    silence.samples.assign(8000, 0.0f);
    auto ms = mel_spectrogram<double>(silence, cfg);
    for (size_t i = 0; i < ms.values.numel(); ++i) CHECK(ms.values[i] == doctest::Approx(std::log(1e-10)));

    auto centers = mel_filter_centers(cfg.n_mels, cfg.sample_rate);
    size_t nearest = 0;
    for (size_t m = 1; m < centers.size(); ++m)
        if (std::abs(centers[m] - 440.0) < std::abs(centers[nearest] - 440.0)) nearest = m;
    auto tonal = mel_spectrogram<double>(tone(440.0, 0.5, 16000), cfg);
    for (size_t f = 0; f < tonal.values.dim(1); ++f) {
        size_t argmax = 0;
        double best = -1e300;
        for (size_t m = 0; m < tonal.values.dim(0); ++m)
            if (tonal.values.at2(m, f) > best) {
                best = tonal.values.at2(m, f);
                argmax = m;
            }
        CHECK(argmax == nearest);
    }

    auto loud = mel_spectrogram<double>(tone(440.0, 0.5, 16000, 1.0), cfg);
    double got = loud.values.at2(nearest, 3) - tonal.values.at2(nearest, 3);
    CHECK(got == doctest::Approx(std::log(4.0)).epsilon(1e-3));
}

TEST_CASE("reshape_square identity, constant, bilinear oracle, bad side") {
    Rng rng(37);
    TensorD sq = rng.uniform_tensor<double>({8, 8}, -1, 1);
    TensorD same = reshape_square(sq, 8);
    for (size_t i = 0; i < sq.numel(); ++i) CHECK(same[i] == sq[i]);

    TensorD c = TensorD::full({3, 7}, 1.25);
    TensorD cr = reshape_square(c, 4);
    for (size_t i = 0; i < cr.numel(); ++i) CHECK(cr[i] == doctest::Approx(1.25).epsilon(1e-12));

    // Hand-computed half-pixel bilinear weights for [[0,1],[2,3]] -> 4x4.
    TensorD m({2, 2}, {0, 1, 2, 3});
    TensorD r = reshape_square(m, 4);
    const double want[4][4] = {{0, 0.25, 0.75, 1},
                               {0.5, 0.75, 1.25, 1.5},
                               {1.5, 1.75, 2.25, 2.5},
                               {2, 2.25, 2.75, 3}};
    for (size_t y = 0; y < 4; ++y)
        for (size_t x = 0; x < 4; ++x) CHECK(r.at2(y, x) == doctest::Approx(want[y][x]).epsilon(1e-12));

    // Bounds are preserved.
    TensorD big = rng.uniform_tensor<double>({5, 9}, -2, 3);
    TensorD rs = reshape_square(big, 8);
    double lo = 1e300, hi = -1e300;
    for (size_t i = 0; i < big.numel(); ++i) {
        lo = std::min(lo, big[i]);
        hi = std::max(hi, big[i]);
    }
    for (size_t i = 0; i < rs.numel(); ++i) {
        CHECK(rs[i] >= lo - 1e-12);
        CHECK(rs[i] <= hi + 1e-12);
    }

    CHECK_THROWS_AS(reshape_square(sq, 6), BadSide);
}

TEST_CASE("wav round trip, stereo downmix, codec rejection, decimation") {
    const auto dir = fs::temp_directory_path() / "fv2es_wav_test";
    fs::create_directories(dir);

    Waveform w = tone(500.0, 0.1, 8000);
    save_wav(dir / "t.wav", w);
    Waveform r = load_wav(dir / "t.wav");
    CHECK(r.sample_rate == 8000);
    REQUIRE(r.samples.size() == w.samples.size());
    for (size_t i = 0; i < w.samples.size(); ++i) CHECK(r.samples[i] == doctest::Approx(w.samples[i]).epsilon(2e-4));

    // Hand-assembled stereo file: channels 0.5 and -0.5 average to zero.
    std::string stereo = encode_wav(w);
    {
        std::string out = "RIFF";
        std::string body = "WAVEfmt ";
        auto put16 = [&](std::string& s, uint16_t v) {
            s.push_back(static_cast<char>(v & 0xff));
            s.push_back(static_cast<char>(v >> 8));
        };
        auto put32 = [&](std::string& s, uint32_t v) {
            for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
        };
        put32(body, 16);
        put16(body, 1);
        put16(body, 2);
        put32(body, 8000);
        put32(body, 8000 * 4);
        put16(body, 4);
        put16(body, 16);
        body += "data";
        put32(body, 16);
        for (int i = 0; i < 4; ++i) {
            put16(body, static_cast<uint16_t>(16384));
            put16(body, static_cast<uint16_t>(-16384));
        }
        put32(out, static_cast<uint32_t>(body.size()));
        out += body;
        Waveform mixed = decode_wav(out, "stereo");
        REQUIRE(mixed.samples.size() == 4);
        for (float s : mixed.samples) CHECK(s == doctest::Approx(0.0f));
    }

    // A float-format (codec 3) header must be rejected as unsupported.
    std::string bad = encode_wav(w);
    bad[20] = 3;
    CHECK_THROWS_AS(decode_wav(bad, "bad"), UnsupportedCodec);

    std::string junk = "RIFFxxxxJUNK";
    CHECK_THROWS_AS(decode_wav(junk, "junk"), DataFormatError);

    Waveform d = decimate(w, 2);
    CHECK(d.sample_rate == 4000);
    CHECK(d.samples.size() == (w.samples.size() + 1) / 2);
    CHECK(d.samples[1] == w.samples[2]);
    CHECK_THROWS_AS(decimate(w, 3), DataFormatError);
}
