// Copyright (C) 2026 The fedlr Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedlr/error.hpp"

namespace fedlr {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidInput: return "invalid-input";
        case ErrorKind::InvalidState: return "invalid-state";
        case ErrorKind::NumericFailure: return "numeric-failure";
        case ErrorKind::Unsupported: return "unsupported";
        case ErrorKind::ProtocolViolation: return "protocol-violation";
        case ErrorKind::PreconditionViolation: return "precondition-violation";
        case ErrorKind::Diverged: return "diverged";
    }
    return "unknown";
}

}  // namespace fedlr
