// Copyright (c) 2026 the fv2es authors
// SPDX-License-Identifier: Apache-2.0

#include "fv2es/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>

#include "fv2es/errors.hpp"
#include "fv2es/tensor_io.hpp"

namespace fv2es {

namespace {

uint16_t get_u16(const unsigned char* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }
uint32_t get_u32(const unsigned char* p) { return detail::get_u32_le(p); }

void put_u16(std::string& out, uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>(v >> 8));
}

}  // namespace

Waveform decode_wav(const std::string& bytes, const std::string& what) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (bytes.size() < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
        throw DataFormatError(what + ": not a RIFF/WAVE file");

    bool have_fmt = false;
    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t sample_rate = 0;
    const unsigned char* data = nullptr;
    size_t data_len = 0;

    size_t off = 12;
    while (off + 8 <= bytes.size()) {
        const char* id = bytes.data() + off;
        const uint32_t len = get_u32(p + off + 4);
        off += 8;
        if (off + len > bytes.size()) throw DataFormatError(what + ": truncated chunk");
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (len < 16) throw DataFormatError(what + ": fmt chunk too small");
            format = get_u16(p + off);
            channels = get_u16(p + off + 2);
            sample_rate = get_u32(p + off + 4);
            bits = get_u16(p + off + 14);
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            data = p + off;
            data_len = len;
        }
        off += len + (len & 1);  // chunks are word aligned
    }

    if (!have_fmt || !data) throw DataFormatError(what + ": missing fmt or data chunk");
    if (format != 1) throw UnsupportedCodec(what + ": only PCM (format 1) is supported, got " + std::to_string(format));
    if (bits != 16) throw UnsupportedCodec(what + ": only 16-bit samples are supported, got " + std::to_string(bits));
    if (channels != 1 && channels != 2)
        throw UnsupportedCodec(what + ": only mono or stereo supported, got " + std::to_string(channels));
    if (sample_rate == 0) throw DataFormatError(what + ": zero sample rate");
    if (data_len % (2 * channels) != 0) throw DataFormatError(what + ": data chunk size not frame aligned");

    Waveform w;
    w.sample_rate = static_cast<int>(sample_rate);
    const size_t frames = data_len / (2 * channels);
    w.samples.resize(frames);
    for (size_t i = 0; i < frames; ++i) {
        float acc = 0;
        for (uint16_t c = 0; c < channels; ++c) {
            const auto raw = static_cast<int16_t>(get_u16(data + (i * channels + c) * 2));
            acc += static_cast<float>(raw) / 32768.0f;
        }
        w.samples[i] = acc / static_cast<float>(channels);
    }
    return w;
}

Waveform load_wav(const std::filesystem::path& path) { return decode_wav(read_file_bytes(path), path.string()); }

std::string encode_wav(const Waveform& w) {
    if (w.sample_rate <= 0) throw BadShape("waveform sample rate must be positive");
    std::string out = "RIFF";
    const uint32_t data_len = static_cast<uint32_t>(w.samples.size() * 2);
    detail::put_u32_le(out, 36 + data_len);
    out += "WAVEfmt ";
    detail::put_u32_le(out, 16);
    put_u16(out, 1);  // PCM
    put_u16(out, 1);  // mono
    detail::put_u32_le(out, static_cast<uint32_t>(w.sample_rate));
    detail::put_u32_le(out, static_cast<uint32_t>(w.sample_rate) * 2);
    put_u16(out, 2);
    put_u16(out, 16);
    out += "data";
    detail::put_u32_le(out, data_len);
    for (float s : w.samples) {
        const float clamped = std::clamp(s, -1.0f, 1.0f);
        const auto raw = static_cast<int16_t>(std::lround(clamped * 32767.0f));
        put_u16(out, static_cast<uint16_t>(raw));
    }
    return out;
}

void save_wav(const std::filesystem::path& path, const Waveform& w) { write_file_bytes(path, encode_wav(w)); }

Waveform decimate(const Waveform& w, int factor) {
    if (factor < 1) throw BadShape("decimation factor must be >= 1");
    if (factor == 1) return w;
    Waveform out;
    out.sample_rate = w.sample_rate / factor;
    if (out.sample_rate * factor != w.sample_rate) throw DataFormatError("sample rate not divisible by decimation factor");
    out.samples.reserve(w.samples.size() / factor + 1);
    for (size_t i = 0; i < w.samples.size(); i += factor) out.samples.push_back(w.samples[i]);
    return out;
}

}  // namespace fv2es
