// Copyright (C) 2026 The fedlr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fedlr/linalg.hpp"

namespace fedlr::ajive {

using linalg::Index;
using linalg::Matrix;
using linalg::SvdFactors;
using linalg::Vector;

struct AjiveConfig {
    /// One entry per view, a single entry shared by all views, or empty for the
    /// elbow rule (largest ratio sigma_j / sigma_{j+1}).
    std::vector<Index> initial_ranks;
    std::optional<Index> joint_rank;
    Index n_resamples = 100;
    double bound_percentile = 95.0;
    bool center = true;
    std::uint64_t seed = 0;
    /// Views whose smaller dimension exceeds this use randomized truncated SVDs.
    Index exact_svd_limit = 256;
    Index rsvd_oversample = 10;
    Index rsvd_power_iters = 2;

    void validate() const;
};

/// Phase 1 output for one view.
struct ViewSignal {
    Matrix data;  // the view after optional column centering
    Vector column_means;
    SvdFactors signal;  // truncated at the initial rank
    double threshold = 0.0;  // midpoint of singular values r_init and r_init + 1
};

/// Column-centers x (when requested), takes its rank-r_init SVD and the
/// singular value threshold used by the later phases.
ViewSignal initial_extraction(const Matrix& x, Index r_init, const AjiveConfig& cfg);
ViewSignal initial_extraction(const Matrix& x, Index r_init);

/// Elbow rule for the initial signal rank.
Index elbow_rank(const Vector& singular_values);

struct JointRankEstimate {
    Index rank = 0;
    double cutoff = 0.0;        // max(wedin_bound, random_bound)
    double wedin_bound = 0.0;   // NaN when no view data was supplied
    double random_bound = 0.0;
    Vector joint_sv_squared;    // squared singular values of [U1 ... Uk]
};

/// Counts squared singular values of the concatenated score bases above the
/// resampled Wedin and random-direction bounds. A configured joint_rank is
/// returned unchanged. When signals is empty only the random bound is used.
JointRankEstimate estimate_joint_rank(std::span<const Matrix> score_bases, const AjiveConfig& cfg,
                                      std::span<const ViewSignal> signals = {});

struct AjiveResult {
    std::vector<Matrix> joint;
    std::vector<Matrix> individual;
    std::vector<Matrix> noise;
    std::vector<Vector> column_means;  // zero vectors when centering is off
    Matrix joint_basis;                // n x joint_rank, orthonormal columns
    Index joint_rank = 0;
    std::vector<Index> individual_ranks;
    JointRankEstimate estimate;
};

/// Full decomposition of views that share their row dimension:
/// view_i - colmeans_i = joint_i + individual_i + noise_i.
AjiveResult ajive(std::span<const Matrix> views, const AjiveConfig& cfg);

struct SyncOptions {
    /// Initial signal rank per view; defaults to min(2 * joint_rank, min(dims) - 1).
    std::optional<Index> initial_rank;
    std::uint64_t seed = 0;
    /// Accept views with negative entries, such as second moments lifted
    /// through a signed basis. The result is still clamped at 0.
    bool allow_signed_views = false;
};

/// Synchronized second moment: uncentered AJIVE with the given joint rank,
/// then the weighted average of the per-view joint parts clamped at zero.
Matrix sync_second_moments(std::span<const Matrix> views, Index joint_rank, std::span<const double> weights,
                           const SyncOptions& options = {});

/// Linear-interpolation percentile (numpy's default), q in [0, 100].
double percentile(std::vector<double> values, double q);

}  // namespace fedlr::ajive
