// Copyright (C) 2026 The fedlr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>

#include <Eigen/Dense>

namespace fedlr::linalg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kDefaultTolerance = 1e-10;

/// Thin singular value decomposition A ~= U diag(S) V^T.
///
/// Singular values are nonincreasing. Each singular pair is sign-normalized so
/// that the largest-magnitude entry of its left vector is positive, which makes
/// the factors a deterministic function of A.
struct SvdFactors {
    Matrix u;
    Vector s;
    Matrix v;
    Index rank = 0;
};

/// Full thin SVD, or its top-k truncation when k is given.
SvdFactors svd(const Matrix& a, std::optional<Index> k = std::nullopt);

/// Halko-Martinsson-Tropp range finder with power iterations, re-orthonormalized
/// after every multiply. Output depends only on (a, r, oversample, power_iters, seed).
SvdFactors randomized_svd(const Matrix& a, Index r, Index oversample, Index power_iters, std::uint64_t seed);

/// r x n matrix with orthonormal rows, a pure function of (seed, n, r).
///
/// Recipe: draw an n x r standard normal matrix from Rng(seed) in row-major
/// order, take its Householder QR, flip columns so diag(R) >= 0 and return Q^T.
Matrix seeded_orthonormal(std::uint64_t seed, Index n, Index r);

/// Orthonormal basis of the column space of a (Householder QR, diag(R) >= 0).
Matrix orthonormalize_columns(const Matrix& a);

/// Best rank-r approximation in Frobenius norm.
Matrix rank_r_truncate(const Matrix& a, Index r);

/// Frobenius distance from a to the set of matrices of rank <= r.
double tail_distance(const Matrix& a, Index r);

/// Codimension of the rank-r manifold inside d_out x d_in matrices.
Index codimension(Index d_out, Index d_in, Index r);

/// Number of singular values above rel_tol * sigma_1 (0 for the zero matrix).
Index numeric_rank(const Matrix& a, double rel_tol = kDefaultTolerance);

Vector singular_values(const Matrix& a);

Matrix reconstruct(const SvdFactors& f);

/// Largest principal angle (radians) between the column spans of two
/// orthonormal bases with the same number of columns.
double max_principal_angle(const Matrix& basis_a, const Matrix& basis_b);

/// ||Q^T Q - I||_F for a matrix with (intended) orthonormal columns.
double column_orthonormality_residual(const Matrix& q);

bool all_finite(const Matrix& a);

/// Spectral norm (largest singular value).
double spectral_norm(const Matrix& a);

}  // namespace fedlr::linalg
