// Copyright (c) 2026 the fv2es authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace fv2es {

// Exit-code categories shared by the library and the CLI:
//   2 = user input error, 3 = data format error, 4 = internal invariant violation.
enum class ErrorKind { UserInput = 2, DataFormat = 3, Internal = 4 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }
    int exit_code() const { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

struct DimensionMismatch : Error {
    explicit DimensionMismatch(const std::string& msg) : Error(ErrorKind::Internal, "DimensionMismatch: " + msg) {}
};

struct BadShape : Error {
    explicit BadShape(const std::string& msg) : Error(ErrorKind::Internal, "BadShape: " + msg) {}
};

struct NotScalarLoss : Error {
    explicit NotScalarLoss(const std::string& msg) : Error(ErrorKind::Internal, "NotScalarLoss: " + msg) {}
};

struct BadLayer : Error {
    explicit BadLayer(const std::string& msg) : Error(ErrorKind::Internal, "BadLayer: " + msg) {}
};

struct NonFinite : Error {
    explicit NonFinite(const std::string& msg) : Error(ErrorKind::Internal, "NonFinite: " + msg) {}
};

struct DegenerateClass : Error {
    explicit DegenerateClass(const std::string& msg) : Error(ErrorKind::Internal, "DegenerateClass: " + msg) {}
};

struct TooShort : Error {
    explicit TooShort(const std::string& msg) : Error(ErrorKind::DataFormat, "TooShort: " + msg) {}
};

struct UnsupportedCodec : Error {
    explicit UnsupportedCodec(const std::string& msg) : Error(ErrorKind::DataFormat, "UnsupportedCodec: " + msg) {}
};

struct DataFormatError : Error {
    explicit DataFormatError(const std::string& msg) : Error(ErrorKind::DataFormat, "DataFormat: " + msg) {}
};

struct LengthMismatch : Error {
    explicit LengthMismatch(const std::string& msg) : Error(ErrorKind::DataFormat, "LengthMismatch: " + msg) {}
};

struct EmptyList : Error {
    explicit EmptyList(const std::string& msg) : Error(ErrorKind::DataFormat, "EmptyList: " + msg) {}
};

struct EmptyAssets : Error {
    explicit EmptyAssets(const std::string& msg) : Error(ErrorKind::UserInput, "EmptyAssets: " + msg) {}
};

struct BadSide : Error {
    explicit BadSide(const std::string& msg) : Error(ErrorKind::UserInput, "BadSide: " + msg) {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(ErrorKind::UserInput, "IoError: " + msg) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(ErrorKind::UserInput, "ConfigError: " + msg) {}
};

}  // namespace fv2es
