// Copyright (C) 2026 The fedlr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <utility>

#include "fedlr/linalg.hpp"

namespace fedlr::optim {

using linalg::Index;
using linalg::Matrix;

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;  // added to sqrt(v) in the preconditioner
    double weight_decay = 0.0;
    bool bias_correction = true;

    /// Throws InvalidInput when any field is out of range.
    void validate() const;
};

struct DenseAdamState {
    Matrix m;
    Matrix v;  // elementwise second moment, >= 0
    long step = 0;

    static DenseAdamState zeros(Index rows, Index cols);
};

struct MomentumState {
    Matrix buffer;
    long step = 0;

    static MomentumState zeros(Index rows, Index cols);
};

/// Rescales g to norm max_norm when it is longer; max_norm <= 0 disables clipping.
Matrix clip_by_norm(const Matrix& g, double max_norm);

Matrix sgd_step(const Matrix& theta, const Matrix& g, double eta);

struct MomentumStep {
    Matrix theta;
    MomentumState state;
};

/// Heavy-ball momentum: buffer' = mu * buffer + g, theta' = theta - eta * buffer'.
MomentumStep momentum_step(const Matrix& theta, const MomentumState& state, const Matrix& g, double eta, double mu);

struct AdamStep {
    Matrix theta;
    DenseAdamState state;
};

/// AdamW with decoupled weight decay applied to the pre-step parameters.
AdamStep adamw_step(const Matrix& theta, const DenseAdamState& state, const Matrix& g, const AdamHyper& h);

// ---------------------------------------------------------------------------
// Gradient-subspace projection

enum class Side { Left, Right };

enum class ProjectorKind { Svd, Rsvd, Seeded };

/// How a projector basis is produced.
struct ProjectorMode {
    ProjectorKind kind = ProjectorKind::Svd;
    std::uint64_t seed = 0;  // basis seed for Seeded, sketch seed for Rsvd
    Index oversample = 4;
    Index power_iters = 2;

    static ProjectorMode svd() { return {ProjectorKind::Svd, 0}; }
    static ProjectorMode rsvd(std::uint64_t sketch_seed) { return {ProjectorKind::Rsvd, sketch_seed}; }
    static ProjectorMode seeded(std::uint64_t basis_seed) { return {ProjectorKind::Seeded, basis_seed}; }
};

/// Orthonormal rank-r basis: r x n with orthonormal rows for Side::Right,
/// m x r with orthonormal columns for Side::Left.
struct Projector {
    Matrix basis;
    Side side = Side::Right;
    ProjectorKind source = ProjectorKind::Svd;
    std::uint64_t seed = 0;  // meaningful for Seeded sources
    long refresh_count = 0;

    Index rank() const { return side == Side::Right ? basis.rows() : basis.cols(); }
    bool is_seeded() const { return source == ProjectorKind::Seeded; }
};

/// Right projection iff rows >= cols (square blocks included).
Side projection_side(Index rows, Index cols);

Projector make_projector(const Matrix& g, Index r, const ProjectorMode& mode);

/// Projector with an explicitly supplied basis; checks orthonormality.
Projector projector_from_basis(Matrix basis, Side side);

Matrix project(const Matrix& g, const Projector& p);
Matrix project_back(const Matrix& u_tilde, const Projector& p);

/// What happens to the projected second moment on a change of basis.
enum class SecondMomentPolicy {
    Clamp,  // transform linearly, then clamp negative entries to 0
    Reset,  // restart the second moment from zero
};

/// Change-of-basis for projected buffers between two same-side projectors.
std::pair<Matrix, Matrix> reproject_buffers(const Matrix& m_tilde, const Matrix& v_tilde, const Projector& p_old,
                                            const Projector& p_new,
                                            SecondMomentPolicy policy = SecondMomentPolicy::Clamp);

struct GaLoreConfig {
    Index rank = 4;
    long refresh_period = 200;
    long adaptive_refreshes = 0;  // data-driven refreshes before switching to seeded bases
    ProjectorKind data_driven = ProjectorKind::Svd;
    std::uint64_t first_seed = 0;
    std::uint64_t sketch_seed = 0;
    SecondMomentPolicy second_moment_policy = SecondMomentPolicy::Clamp;
};

struct GaLoreState {
    std::optional<Projector> projector;
    Matrix m;  // projected shape: rows x r (right) or r x cols (left)
    Matrix v;
    long step = 0;
    long refresh_period = 200;
    long adaptive_refreshes_remaining = 0;
    std::uint64_t next_seed = 0;
    Index rank = 0;
    Side side = Side::Right;
    ProjectorKind data_driven = ProjectorKind::Svd;
    std::uint64_t sketch_seed = 0;
    SecondMomentPolicy second_moment_policy = SecondMomentPolicy::Clamp;

    /// Zero buffers sized for a rows x cols block; no projector yet.
    static GaLoreState fresh(Index rows, Index cols, const GaLoreConfig& cfg);
};

struct GaLoreStep {
    Matrix theta;
    GaLoreState state;
};

/// One GaLoreAdamW step.
///
/// When step % refresh_period == 0 the projector is rebuilt from g (skipped at
/// step 0 when a projector was supplied up front): data-driven while
/// adaptive_refreshes_remaining > 0, otherwise seeded with next_seed, which is
/// then incremented. Buffers are carried over with reproject_buffers. AdamW then
/// runs on the projected gradient and the update is lifted back with project_back.
GaLoreStep galore_adamw_step(const Matrix& theta, const GaLoreState& state, const Matrix& g, const AdamHyper& h);

}  // namespace fedlr::optim
