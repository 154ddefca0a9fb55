// Copyright (C) 2026 The fedlr Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedlr/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fedlr/error.hpp"
#include "fedlr/random.hpp"

namespace fedlr::linalg {
namespace {

void check_input(const Matrix& a, const char* op) {
    require(a.rows() > 0 && a.cols() > 0, ErrorKind::InvalidInput, std::string(op) + ": matrix has a zero dimension");
    require(all_finite(a), ErrorKind::InvalidInput, std::string(op) + ": matrix has non-finite entries");
}

// Flip each singular pair so the largest-magnitude entry of u's column is positive.
void normalize_signs(Matrix& u, Matrix& v) {
    for (Index j = 0; j < u.cols(); ++j) {
        Index arg = 0;
        u.col(j).cwiseAbs().maxCoeff(&arg);
        if (u(arg, j) < 0.0) {
            u.col(j) *= -1.0;
            v.col(j) *= -1.0;
        }
    }
}

SvdFactors truncate(SvdFactors f, Index k) {
    f.u.conservativeResize(Eigen::NoChange, k);
    f.v.conservativeResize(Eigen::NoChange, k);
    f.s.conservativeResize(k);
    f.rank = k;
    return f;
}

}  // namespace

bool all_finite(const Matrix& a) { return a.allFinite(); }

SvdFactors svd(const Matrix& a, std::optional<Index> k) {
    check_input(a, "svd");
    const Index full = std::min(a.rows(), a.cols());
    if (k) require(*k >= 0 && *k <= full, ErrorKind::InvalidInput, "svd: requested rank exceeds min(rows, cols)");

    Eigen::BDCSVD<Matrix> solver(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (solver.info() != Eigen::Success || !solver.singularValues().allFinite()) {
        std::ostringstream msg;
        msg << "svd did not converge (" << a.rows() << "x" << a.cols() << ", ||A||_F=" << a.norm()
            << ", max|a_ij|=" << a.cwiseAbs().maxCoeff() << ")";
        fail(ErrorKind::NumericFailure, msg.str());
    }
    SvdFactors f{solver.matrixU(), solver.singularValues(), solver.matrixV(), full};
    normalize_signs(f.u, f.v);
    return k ? truncate(std::move(f), *k) : f;
}

Matrix orthonormalize_columns(const Matrix& a) {
    const Index k = std::min(a.rows(), a.cols());
    Eigen::HouseholderQR<Matrix> qr(a);
    Matrix q = qr.householderQ() * Matrix::Identity(a.rows(), k);
    const auto& packed = qr.matrixQR();
    for (Index j = 0; j < k; ++j)
        if (packed(j, j) < 0.0) q.col(j) *= -1.0;
    return q;
}

SvdFactors randomized_svd(const Matrix& a, Index r, Index oversample, Index power_iters, std::uint64_t seed) {
    check_input(a, "randomized_svd");
    require(r >= 0 && oversample >= 0 && power_iters >= 0, ErrorKind::InvalidInput,
            "randomized_svd: negative rank, oversample or power iteration count");
    require(r + oversample <= std::min(a.rows(), a.cols()), ErrorKind::InvalidInput,
            "randomized_svd: r + oversample exceeds min(rows, cols)");
    if (r == 0) return SvdFactors{Matrix(a.rows(), 0), Vector(0), Matrix(a.cols(), 0), 0};

    Rng rng(seed);
    const Matrix omega = rng.gaussian_matrix(a.cols(), r + oversample);
    Matrix q = orthonormalize_columns(a * omega);
    for (Index it = 0; it < power_iters; ++it) {
        const Matrix z = orthonormalize_columns(a.transpose() * q);
        q = orthonormalize_columns(a * z);
    }
    // b = q^T a is wide; factor b^T = Q_b R and take the SVD of the small R^T.
    const Matrix bt = a.transpose() * q;
    const Matrix qb = orthonormalize_columns(bt);
    const Matrix rt = (qb.transpose() * bt).transpose();
    SvdFactors small = svd(rt);
    SvdFactors f{q * small.u, std::move(small.s), qb * small.v, small.rank};
    normalize_signs(f.u, f.v);
    return truncate(std::move(f), r);
}

Matrix seeded_orthonormal(std::uint64_t seed, Index n, Index r) {
    require(n >= 1 && r >= 0, ErrorKind::InvalidInput, "seeded_orthonormal: invalid dimensions");
    require(r <= n, ErrorKind::InvalidInput, "seeded_orthonormal: r exceeds n");
    Rng rng(seed);
    return orthonormalize_columns(rng.gaussian_matrix(n, r)).transpose();
}

Vector singular_values(const Matrix& a) {
    check_input(a, "singular_values");
    Eigen::BDCSVD<Matrix> solver(a);
    require(solver.info() == Eigen::Success, ErrorKind::NumericFailure, "singular_values: svd did not converge");
    return solver.singularValues();
}

Matrix rank_r_truncate(const Matrix& a, Index r) {
    require(r >= 0, ErrorKind::InvalidInput, "rank_r_truncate: negative rank");
    if (r == 0) return Matrix::Zero(a.rows(), a.cols());
    if (r >= std::min(a.rows(), a.cols())) {
        check_input(a, "rank_r_truncate");
        return a;
    }
    return reconstruct(svd(a, r));
}

double tail_distance(const Matrix& a, Index r) {
    require(r >= 0, ErrorKind::InvalidInput, "tail_distance: negative rank");
    const Vector s = singular_values(a);
    if (r >= s.size()) return 0.0;
    return s.tail(s.size() - r).norm();
}

Index codimension(Index d_out, Index d_in, Index r) {
    require(r >= 0 && r <= std::min(d_out, d_in), ErrorKind::InvalidInput, "codimension: r exceeds min(d_out, d_in)");
    return (d_out - r) * (d_in - r);
}

Index numeric_rank(const Matrix& a, double rel_tol) {
    const Vector s = singular_values(a);
    if (s.size() == 0 || s(0) == 0.0) return 0;
    const double cut = rel_tol * s(0);
    return static_cast<Index>(std::count_if(s.begin(), s.end(), [cut](double x) { return x > cut; }));
}

Matrix reconstruct(const SvdFactors& f) { return f.u * f.s.asDiagonal() * f.v.transpose(); }

double max_principal_angle(const Matrix& basis_a, const Matrix& basis_b) {
    require(basis_a.rows() == basis_b.rows() && basis_a.cols() == basis_b.cols(), ErrorKind::InvalidInput,
            "max_principal_angle: basis shapes differ");
    if (basis_a.cols() == 0) return 0.0;
    // sin of the largest angle is ||(I - A A^T) B||_2; this stays accurate for tiny angles.
    const Matrix residual = basis_b - basis_a * (basis_a.transpose() * basis_b);
    return std::asin(std::min(1.0, spectral_norm(residual)));
}

double column_orthonormality_residual(const Matrix& q) {
    return (q.transpose() * q - Matrix::Identity(q.cols(), q.cols())).norm();
}

double spectral_norm(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    return singular_values(a)(0);
}

}  // namespace fedlr::linalg
