// Copyright (c) 2026 the fv2es authors
// SPDX-License-Identifier: Apache-2.0

#include <cctype>

#include "fv2es/errors.hpp"
#include "fv2es/text.hpp"

namespace fv2es {

uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

TokenSequence tokenize(const std::string& text, uint32_t vocab_size) {
    if (vocab_size == 0) throw ConfigError("vocab_size must be positive");
    TokenSequence out;
    std::string current;
    auto flush = [&]() {
        if (!current.empty()) {
            out.tokens.push_back(static_cast<uint32_t>(fnv1a64(current) % vocab_size));
            current.clear();
        }
    };
    for (unsigned char c : text) {
        // ASCII letters/digits continue a token (lowercased); non-ASCII bytes
        // pass through so UTF-8 words stay intact; everything else splits.
        if (std::isalnum(c) || c >= 0x80)
            current.push_back(static_cast<char>(std::tolower(c)));
        else
            flush();
    }
    flush();
    return out;
}

}  // namespace fv2es
