// Copyright (c) 2026 the fv2es authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <vector>

namespace fv2es {

// Mono PCM in [-1, 1].
struct Waveform {
    std::vector<float> samples;
    int sample_rate = 0;

    double duration_s() const { return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0; }
};

// RIFF/WAVE, PCM 16-bit signed little-endian, mono or stereo (stereo is
// downmixed by averaging). Compressed or non-16-bit data raises
// UnsupportedCodec; structural damage raises DataFormatError.
Waveform load_wav(const std::filesystem::path& path);
Waveform decode_wav(const std::string& bytes, const std::string& what);

std::string encode_wav(const Waveform& w);
void save_wav(const std::filesystem::path& path, const Waveform& w);

// Plain integer-factor subsampling; the only resampling offered.
Waveform decimate(const Waveform& w, int factor);

}  // namespace fv2es
