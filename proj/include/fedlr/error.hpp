// Copyright (C) 2026 The fedlr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace fedlr {

enum class ErrorKind {
    InvalidInput,
    InvalidState,
    NumericFailure,
    Unsupported,
    ProtocolViolation,
    PreconditionViolation,
    Diverged,
};

const char* to_string(ErrorKind kind);

/// Base exception for every failure raised by the library.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
    if (!cond) fail(kind, what);
}

}  // namespace fedlr
