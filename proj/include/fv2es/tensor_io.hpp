// Copyright (c) 2026 the fv2es authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fv2es/tensor.hpp"

namespace fv2es {

// FVT1 tensor file: magic "FVT1", 1 byte dtype (0=f32, 1=f64), 1 byte rank,
// 2 reserved zero bytes, rank little-endian u32 dims, then the row-major
// payload in little-endian IEEE floats.

namespace detail {

inline void put_u32_le(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline uint32_t get_u32_le(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) | (static_cast<uint32_t>(p[2]) << 16) |
           (static_cast<uint32_t>(p[3]) << 24);
}

inline void put_u64_le(std::string& out, uint64_t v) {
    put_u32_le(out, static_cast<uint32_t>(v & 0xffffffffu));
    put_u32_le(out, static_cast<uint32_t>(v >> 32));
}

inline uint64_t get_u64_le(const unsigned char* p) {
    return static_cast<uint64_t>(get_u32_le(p)) | (static_cast<uint64_t>(get_u32_le(p + 4)) << 32);
}

}  // namespace detail

template <typename T>
std::string encode_fvt1(const Tensor<T>& t) {
    std::string out = "FVT1";
    out.push_back(static_cast<char>(dtype_of<T>()));
    if (t.rank() > 8) throw BadShape("FVT1 supports rank <= 8");
    out.push_back(static_cast<char>(t.rank()));
    out.push_back(0);
    out.push_back(0);
    for (size_t d : t.shape()) {
        if (d > 0xffffffffull) throw BadShape("FVT1 dimension overflows u32");
        detail::put_u32_le(out, static_cast<uint32_t>(d));
    }
    for (const T& v : t.vec()) {
        if constexpr (std::is_same_v<T, float>)
            detail::put_u32_le(out, std::bit_cast<uint32_t>(v));
        else
            detail::put_u64_le(out, std::bit_cast<uint64_t>(v));
    }
    return out;
}

template <typename T>
Tensor<T> decode_fvt1(const std::string& bytes, const std::string& what) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (bytes.size() < 8 || std::memcmp(p, "FVT1", 4) != 0) throw DataFormatError(what + ": bad FVT1 magic");
    const uint8_t dtype = p[4];
    const uint8_t rank = p[5];
    if (dtype != static_cast<uint8_t>(DType::F32) && dtype != static_cast<uint8_t>(DType::F64))
        throw DataFormatError(what + ": unknown dtype code " + std::to_string(dtype));
    if (p[6] != 0 || p[7] != 0) throw DataFormatError(what + ": reserved bytes not zero");
    if (dtype != static_cast<uint8_t>(dtype_of<T>()))
        throw DataFormatError(what + ": dtype does not match the requested element type");
    if (rank > 8) throw DataFormatError(what + ": rank > 8");
    size_t off = 8;
    if (bytes.size() < off + 4ull * rank) throw DataFormatError(what + ": truncated header");
    std::vector<size_t> shape(rank);
    size_t numel = 1;
    for (size_t i = 0; i < rank; ++i) {
        const uint32_t d = detail::get_u32_le(p + off);
        if (d == 0) throw DataFormatError(what + ": zero dimension");
        shape[i] = d;
        numel *= d;
        off += 4;
    }
    const size_t elem = sizeof(T);
    if (bytes.size() != off + numel * elem) throw DataFormatError(what + ": payload size mismatch");
    Tensor<T> t(shape);
    for (size_t i = 0; i < numel; ++i) {
        if constexpr (std::is_same_v<T, float>)
            t[i] = std::bit_cast<float>(detail::get_u32_le(p + off + i * 4));
        else
            t[i] = std::bit_cast<double>(detail::get_u64_le(p + off + i * 8));
    }
    return t;
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (!in.good() && !in.eof()) throw IoError("read failed for " + path.string());
    return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

template <typename T>
void save_fvt1(const std::filesystem::path& path, const Tensor<T>& t) {
    write_file_bytes(path, encode_fvt1(t));
}

template <typename T>
Tensor<T> load_fvt1(const std::filesystem::path& path) {
    return decode_fvt1<T>(read_file_bytes(path), path.string());
}

// Binary PGM (P5) rendering, values scaled to 0-255 per map. A constant map
// renders mid-gray.
template <typename T>
void save_pgm(const std::filesystem::path& path, const Tensor<T>& map) {
    if (map.rank() != 2) throw BadShape("PGM export expects a rank-2 map");
    const size_t h = map.dim(0), w = map.dim(1);
    T lo = map[0], hi = map[0];
    for (const T& v : map.vec()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    for (const T& v : map.vec()) {
        int g = 128;
        if (hi > lo) g = static_cast<int>(std::lround(static_cast<double>(v - lo) / static_cast<double>(hi - lo) * 255.0));
        out.push_back(static_cast<char>(std::clamp(g, 0, 255)));
    }
    write_file_bytes(path, out);
}

}  // namespace fv2es
