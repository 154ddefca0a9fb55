// Copyright (C) 2026 The fedlr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace fedlr {

/// Worker count: FEDLR_THREADS when set to a positive integer, else the
/// hardware concurrency (at least 1).
std::size_t thread_count();

/// Calls fn(i) for every i in [0, n) on up to thread_count() threads.
///
/// Each index is handled exactly once, so callers that write only to slot i
/// get results identical to a sequential loop. If any call throws, the
/// exception from the lowest failing index is rethrown after all workers stop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace fedlr
