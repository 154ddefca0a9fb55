// Copyright (C) 2026 The fedlr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedlr/linalg.hpp"

namespace fedlr::adapters {

using linalg::Index;
using linalg::Matrix;

/// W = w0 + scaling * b * a with a: r x d_in, b: d_out x r.
struct LoraParams {
    Matrix w0;
    Matrix a;
    Matrix b;
    double scaling = 1.0;

    Index rank() const { return a.rows(); }
    void validate() const;

    /// a ~ N(0, 1/r) entrywise, b = 0, so the adapter starts at zero delta.
    static LoraParams init(Matrix w0, Index r, std::uint64_t seed, double scaling = 1.0);
};

Matrix effective_weight(const LoraParams& p);

struct FactorPair {
    Matrix b;
    Matrix a;
};

enum class AggregationMode { FactorProduct, FrozenA, Lifted };

const char* to_string(AggregationMode mode);

struct AggregatedDelta {
    Matrix delta;
    AggregationMode mode = AggregationMode::Lifted;
};

/// (sum p_i b_i)(sum p_i a_i).
AggregatedDelta aggregate_factor_product(std::span<const FactorPair> clients, std::span<const double> weights);

/// (sum p_i b_i) a0.
AggregatedDelta aggregate_frozen_a(std::span<const Matrix> client_b, const Matrix& a0, std::span<const double> weights);

/// sum p_i b_i a_i.
AggregatedDelta aggregate_lifted(std::span<const FactorPair> clients, std::span<const double> weights);

struct MismatchReport {
    double tail = 0.0;
    Index numeric_rank = 0;
};

/// Eckart-Young tail beyond rank r plus the numeric rank of the aggregate.
MismatchReport mismatch_report(const Matrix& delta, Index r);
inline MismatchReport mismatch_report(const AggregatedDelta& d, Index r) { return mismatch_report(d.delta, r); }

/// Throws InvalidInput unless weights are nonnegative and sum to 1 within 1e-12.
void check_weights(std::span<const double> weights, std::size_t expected);

/// p_i / sum(p) over the given entries.
std::vector<double> renormalize(std::span<const double> weights);

}  // namespace fedlr::adapters
