// Copyright (c) 2026 the fv2es authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "fv2es/tensor_ops.hpp"
#include "fv2es/wav.hpp"

namespace fv2es {

struct MelConfig {
    int sample_rate = 16000;
    int n_fft = 1024;
    int hop = 256;
    int n_mels = 64;

    void validate() const {
        if (sample_rate <= 0 || n_fft <= 0 || hop <= 0 || n_mels < 2) throw ConfigError("bad mel configuration");
        if ((n_fft & (n_fft - 1)) != 0) throw ConfigError("n_fft must be a power of two");
    }
};

template <typename T>
struct MelSpectrum {
    Tensor<T> values;  // n_mels x frames, log energies floored at log(1e-10)
    MelConfig params;
};

// In-place iterative radix-2 FFT (n is a power of two by MelConfig).
template <typename T>
void fft_radix2(std::vector<std::complex<T>>& a) {
    const size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0) throw BadShape("fft length must be a power of two");
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const T ang = static_cast<T>(-2.0 * 3.14159265358979323846) / static_cast<T>(len);
        const std::complex<T> wl(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<T> w(1);
            for (size_t j = 0; j < len / 2; ++j) {
                const std::complex<T> u = a[i + j];
                const std::complex<T> v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

// Hann-windowed magnitude-squared spectra, no center padding.
// Output is (n_fft/2+1) x frames with frames = floor((len-n_fft)/hop)+1.
template <typename T>
Tensor<T> stft_power(const Waveform& w, int n_fft, int hop) {
    if (n_fft <= 0 || (n_fft & (n_fft - 1)) != 0) throw ConfigError("n_fft must be a power of two");
    if (hop <= 0) throw ConfigError("hop must be positive");
    if (w.samples.size() < static_cast<size_t>(n_fft))
        throw TooShort("waveform has " + std::to_string(w.samples.size()) + " samples, needs " + std::to_string(n_fft));
    const size_t frames = (w.samples.size() - n_fft) / hop + 1;
    const size_t bins = static_cast<size_t>(n_fft) / 2 + 1;

    std::vector<T> window(n_fft);
    for (int i = 0; i < n_fft; ++i)
        window[i] = static_cast<T>(0.5 - 0.5 * std::cos(2.0 * 3.14159265358979323846 * i / n_fft));

    Tensor<T> out({bins, frames});
    std::vector<std::complex<T>> buf(n_fft);
    for (size_t f = 0; f < frames; ++f) {
        for (int i = 0; i < n_fft; ++i)
            buf[i] = std::complex<T>(static_cast<T>(w.samples[f * hop + i]) * window[i], T(0));
        fft_radix2(buf);
        for (size_t k = 0; k < bins; ++k) out.at2(k, f) = std::norm(buf[k]);
    }
    ensure_finite(out, "stft_power");
    return out;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular filters with centers equally spaced on the HTK mel scale from
// 0 Hz to sr/2; peak weight 1, no area normalization.
template <typename T>
Tensor<T> mel_filterbank(int n_mels, int n_fft, int sample_rate) {
    if (n_mels < 2) throw ConfigError("n_mels must be >= 2");
    const size_t bins = static_cast<size_t>(n_fft) / 2 + 1;
    const double mel_max = hz_to_mel(sample_rate / 2.0);
    std::vector<double> edges(n_mels + 2);
    for (int i = 0; i < n_mels + 2; ++i) edges[i] = mel_to_hz(mel_max * i / (n_mels + 1));

    Tensor<T> fb({static_cast<size_t>(n_mels), bins});
    for (int m = 0; m < n_mels; ++m) {
        const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
        for (size_t k = 0; k < bins; ++k) {
            const double f = static_cast<double>(k) * sample_rate / n_fft;
            double wgt = 0.0;
            if (f > left && f < right)
                wgt = f <= center ? (f - left) / (center - left) : (right - f) / (right - center);
            fb.at2(m, k) = static_cast<T>(wgt);
        }
    }
    return fb;
}

inline std::vector<double> mel_filter_centers(int n_mels, int sample_rate) {
    const double mel_max = hz_to_mel(sample_rate / 2.0);
    std::vector<double> centers(n_mels);
    for (int m = 0; m < n_mels; ++m) centers[m] = mel_to_hz(mel_max * (m + 1) / (n_mels + 1));
    return centers;
}

template <typename T>
MelSpectrum<T> mel_spectrogram(const Waveform& w, const MelConfig& cfg) {
    cfg.validate();
    if (w.sample_rate != cfg.sample_rate)
        throw DataFormatError("waveform sample rate " + std::to_string(w.sample_rate) + " does not match configured " +
                              std::to_string(cfg.sample_rate));
    const Tensor<T> power = stft_power<T>(w, cfg.n_fft, cfg.hop);
    const Tensor<T> fb = mel_filterbank<T>(cfg.n_mels, cfg.n_fft, cfg.sample_rate);
    Tensor<T> mel = matmul(fb, power);
    const T floor_v = static_cast<T>(1e-10);
    for (size_t i = 0; i < mel.numel(); ++i) mel[i] = std::log(std::max(mel[i], floor_v));
    ensure_finite(mel, "mel_spectrogram");
    MelSpectrum<T> out;
    out.values = std::move(mel);
    out.params = cfg;
    return out;
}

// Bilinear resize of an H x W map to side x side with half-pixel centers and
// edge clamping; exact on inputs that are already side x side.
template <typename T>
Tensor<T> reshape_square(const Tensor<T>& map, int side) {
    if (map.rank() != 2) throw BadShape("reshape_square expects a rank-2 map");
    if (side <= 0 || side % 4 != 0) throw BadSide("spectrum side must be a positive multiple of 4");
    const size_t sh = map.dim(0), sw = map.dim(1);
    const size_t ds = static_cast<size_t>(side);
    if (sh == ds && sw == ds) return map;
    Tensor<T> out({ds, ds});
    const double sy = static_cast<double>(sh) / side;
    const double sx = static_cast<double>(sw) / side;
    auto sample = [&](long y, long x) {
        y = std::clamp<long>(y, 0, static_cast<long>(sh) - 1);
        x = std::clamp<long>(x, 0, static_cast<long>(sw) - 1);
        return static_cast<double>(map.at2(y, x));
    };
    for (size_t oy = 0; oy < ds; ++oy) {
        const double fy = (oy + 0.5) * sy - 0.5;
        const long y0 = static_cast<long>(std::floor(fy));
        const double ty = fy - y0;
        for (size_t ox = 0; ox < ds; ++ox) {
            const double fx = (ox + 0.5) * sx - 0.5;
            const long x0 = static_cast<long>(std::floor(fx));
            const double tx = fx - x0;
            const double v = (1 - ty) * ((1 - tx) * sample(y0, x0) + tx * sample(y0, x0 + 1)) +
                             ty * ((1 - tx) * sample(y0 + 1, x0) + tx * sample(y0 + 1, x0 + 1));
            out.at2(oy, ox) = static_cast<T>(v);
        }
    }
    ensure_finite(out, "reshape_square");
    return out;
}

}  // namespace fv2es
