// Copyright (C) 2026 The fedlr Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedlr/ajive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fedlr/error.hpp"
#include "fedlr/random.hpp"

namespace fedlr::ajive {
namespace {

enum Stream : std::uint64_t { kPhase1 = 1, kRandomBound = 2, kWedin = 3, kPhase3 = 4, kAutoRank = 5 };

// Singular values below this fraction of the largest carry no signal.
constexpr double kSignalFloor = 1e-10;
// Squared joint singular values this close (relative) to the cutoff count as exceeding it.
constexpr double kCutoffSlack = 1e-9;

double top_sv_squared(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    const Matrix gram = a.cols() <= a.rows() ? Matrix(a.transpose() * a) : Matrix(a * a.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
    return std::max(0.0, eig.eigenvalues().maxCoeff());
}

// Rank-k SVD, randomized when the matrix is large.
SvdFactors truncated_svd(const Matrix& x, Index k, const AjiveConfig& cfg, std::uint64_t seed) {
    const Index full = std::min(x.rows(), x.cols());
    k = std::min(k, full);
    if (full <= cfg.exact_svd_limit) return linalg::svd(x, k);
    const Index oversample = std::min(cfg.rsvd_oversample, full - k);
    return linalg::randomized_svd(x, k, oversample, cfg.rsvd_power_iters, seed);
}

// Random orthonormal n x r basis orthogonal to the columns of `basis`.
Matrix complement_directions(const Matrix& basis, Index r, Rng& rng) {
    Matrix g = rng.gaussian_matrix(basis.rows(), r);
    if (basis.cols() > 0) g -= basis * (basis.transpose() * g);
    return linalg::orthonormalize_columns(g);
}

Index signal_rank(const Vector& s, Index cap) {
    if (s.size() == 0 || s(0) <= 0.0) return 0;
    Index k = 0;
    while (k < std::min<Index>(cap, s.size()) && s(k) > kSignalFloor * s(0)) ++k;
    return k;
}

struct ConcatSpectrum {
    Vector sv_squared;  // descending
    Matrix u;           // leading left singular vectors, as many as requested
};

// Squared singular values and leading left singular vectors of [U1 ... Uk] from
// the smaller Gram matrix; its entries lie in [0, k] so the squared values are
// accurate to rounding.
ConcatSpectrum concat_spectrum(const Matrix& m, Index k) {
    ConcatSpectrum out;
    if (m.cols() == 0) {
        out.sv_squared = Vector(0);
        out.u = Matrix(m.rows(), 0);
        return out;
    }
    const bool tall = m.cols() <= m.rows();
    const Matrix gram = tall ? Matrix(m.transpose() * m) : Matrix(m * m.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
    require(eig.info() == Eigen::Success, ErrorKind::NumericFailure, "ajive: eigensolver failed on the score Gram matrix");
    const Index g = gram.rows();
    out.sv_squared = eig.eigenvalues().reverse().cwiseMax(0.0);
    const double floor = kSignalFloor * kSignalFloor * std::max(out.sv_squared(0), 1e-300);
    k = std::min(k, static_cast<Index>((out.sv_squared.array() > floor).count()));
    Matrix u(m.rows(), k);
    for (Index j = 0; j < k; ++j) {
        const auto vec = eig.eigenvectors().col(g - 1 - j);
        u.col(j) = tall ? Vector(m * vec / std::sqrt(out.sv_squared(j))) : Vector(vec);
    }
    out.u = linalg::orthonormalize_columns(u);
    for (Index j = 0; j < k; ++j) {
        Index arg = 0;
        out.u.col(j).cwiseAbs().maxCoeff(&arg);
        if (out.u(arg, j) < 0.0) out.u.col(j) *= -1.0;
    }
    return out;
}

SvdFactors keep_leading(const SvdFactors& f, Index k) {
    return SvdFactors{f.u.leftCols(k), f.s.head(k), f.v.leftCols(k), k};
}

std::vector<Index> resolve_initial_ranks(std::span<const Matrix> views, const AjiveConfig& cfg) {
    std::vector<Index> ranks(views.size());
    for (std::size_t i = 0; i < views.size(); ++i) {
        if (cfg.initial_ranks.empty()) {
            const Matrix& x = views[i];
            Matrix centered = x;
            if (cfg.center) centered.rowwise() -= x.colwise().mean();
            const Index full = std::min(x.rows(), x.cols());
            // Large views: elbow over a leading window of the spectrum.
            const Index window = full <= cfg.exact_svd_limit ? full : std::min<Index>(64, full - cfg.rsvd_oversample);
            const SvdFactors f = truncated_svd(centered, window, cfg, derive_seed(cfg.seed, kAutoRank, i));
            ranks[i] = elbow_rank(f.s);
        } else {
            ranks[i] = cfg.initial_ranks.size() == 1 ? cfg.initial_ranks[0] : cfg.initial_ranks[i];
        }
    }
    return ranks;
}

AjiveResult degenerate_result(std::span<const Matrix> views, std::vector<ViewSignal>& signals) {
    AjiveResult out;
    const Index n = views.front().rows();
    out.joint_basis = Matrix(n, 0);
    for (std::size_t i = 0; i < views.size(); ++i) {
        out.joint.push_back(Matrix::Zero(views[i].rows(), views[i].cols()));
        out.individual.push_back(Matrix::Zero(views[i].rows(), views[i].cols()));
        out.noise.push_back(signals[i].data);
        out.column_means.push_back(signals[i].column_means);
        out.individual_ranks.push_back(0);
    }
    out.estimate.joint_sv_squared = Vector(0);
    out.estimate.wedin_bound = std::numeric_limits<double>::quiet_NaN();
    return out;
}

}  // namespace

void AjiveConfig::validate() const {
    require(n_resamples >= 1, ErrorKind::InvalidInput, "ajive: n_resamples must be positive");
    require(bound_percentile > 0.0 && bound_percentile < 100.0, ErrorKind::InvalidInput,
            "ajive: bound_percentile must lie in (0, 100)");
    for (Index r : initial_ranks) require(r >= 1, ErrorKind::InvalidInput, "ajive: initial ranks must be positive");
    if (joint_rank) require(*joint_rank >= 0, ErrorKind::InvalidInput, "ajive: joint_rank must be nonnegative");
    require(exact_svd_limit >= 1 && rsvd_oversample >= 0 && rsvd_power_iters >= 0, ErrorKind::InvalidInput,
            "ajive: invalid randomized svd settings");
}

double percentile(std::vector<double> values, double q) {
    require(!values.empty(), ErrorKind::InvalidInput, "percentile: empty sample");
    require(q >= 0.0 && q <= 100.0, ErrorKind::InvalidInput, "percentile: q outside [0, 100]");
    std::sort(values.begin(), values.end());
    const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

Index elbow_rank(const Vector& s) {
    require(s.size() >= 2, ErrorKind::InvalidInput, "elbow_rank: need at least two singular values");
    if (s(0) <= 0.0) return 1;
    Index best = 1;
    double best_ratio = -1.0;
    for (Index j = 0; j + 1 < s.size(); ++j) {
        const double next = s(j + 1);
        if (next <= kSignalFloor * s(0)) return j + 1;
        const double ratio = s(j) / next;
        if (ratio > best_ratio) {
            best_ratio = ratio;
            best = j + 1;
        }
    }
    return best;
}

ViewSignal initial_extraction(const Matrix& x, Index r_init) { return initial_extraction(x, r_init, AjiveConfig{}); }

ViewSignal initial_extraction(const Matrix& x, Index r_init, const AjiveConfig& cfg) {
    require(x.rows() > 0 && x.cols() > 0, ErrorKind::InvalidInput, "initial_extraction: empty view");
    require(r_init >= 1 && r_init < std::min(x.rows(), x.cols()), ErrorKind::InvalidInput,
            "initial_extraction: r_init must satisfy 1 <= r_init < min(rows, cols)");
    ViewSignal out;
    out.data = x;
    out.column_means = Vector::Zero(x.cols());
    if (cfg.center) {
        out.column_means = x.colwise().mean().transpose();
        out.data.rowwise() -= out.column_means.transpose();
    }
    const SvdFactors f = truncated_svd(out.data, r_init + 1, cfg, derive_seed(cfg.seed, kPhase1));
    out.threshold = 0.5 * (f.s(r_init - 1) + f.s(r_init));
    out.signal = keep_leading(f, r_init);
    return out;
}

JointRankEstimate estimate_joint_rank(std::span<const Matrix> score_bases, const AjiveConfig& cfg,
                                      std::span<const ViewSignal> signals) {
    require(!score_bases.empty(), ErrorKind::InvalidInput, "estimate_joint_rank: empty view list");
    cfg.validate();
    const Index n = score_bases.front().rows();
    Index total = 0;
    for (const Matrix& u : score_bases) {
        require(u.rows() == n, ErrorKind::InvalidInput, "estimate_joint_rank: score bases differ in row count");
        require(u.cols() == 0 || linalg::column_orthonormality_residual(u) < 1e-8, ErrorKind::InvalidInput,
                "estimate_joint_rank: score basis is not orthonormal");
        total += u.cols();
    }
    require(signals.empty() || signals.size() == score_bases.size(), ErrorKind::InvalidInput,
            "estimate_joint_rank: signal count differs from basis count");

    JointRankEstimate est;
    Matrix m(n, total);
    Index offset = 0;
    for (const Matrix& u : score_bases) {
        m.middleCols(offset, u.cols()) = u;
        offset += u.cols();
    }
    est.joint_sv_squared = concat_spectrum(m, 0).sv_squared;

    if (cfg.joint_rank) {
        est.rank = *cfg.joint_rank;
        est.wedin_bound = std::numeric_limits<double>::quiet_NaN();
        est.random_bound = std::numeric_limits<double>::quiet_NaN();
        est.cutoff = std::numeric_limits<double>::quiet_NaN();
        return est;
    }

    const auto resamples = static_cast<std::size_t>(cfg.n_resamples);
    std::vector<double> random_samples(resamples);
    Rng rand_rng(derive_seed(cfg.seed, kRandomBound));
    for (std::size_t b = 0; b < resamples; ++b) {
        Matrix draw(n, total);
        Index off = 0;
        for (const Matrix& u : score_bases) {
            if (u.cols() > 0) draw.middleCols(off, u.cols()) = linalg::orthonormalize_columns(rand_rng.gaussian_matrix(n, u.cols()));
            off += u.cols();
        }
        random_samples[b] = top_sv_squared(draw);
    }
    est.random_bound = percentile(random_samples, cfg.bound_percentile);

    if (signals.empty()) {
        est.wedin_bound = std::numeric_limits<double>::quiet_NaN();
        est.cutoff = est.random_bound;
    } else {
        std::vector<double> wedin_samples(resamples, static_cast<double>(signals.size()));
        for (std::size_t i = 0; i < signals.size(); ++i) {
            const ViewSignal& sig = signals[i];
            const Index r = sig.signal.rank;
            if (r == 0) continue;
            const double sigma_min = sig.signal.s(r - 1);
            const bool left_room = sig.data.rows() > r;
            const bool right_room = sig.data.cols() > r;
            Rng rng(derive_seed(cfg.seed, kWedin, i));
            for (std::size_t b = 0; b < resamples; ++b) {
                double u_norm = 0.0, v_norm = 0.0;
                if (left_room) u_norm = std::sqrt(top_sv_squared(sig.data.transpose() * complement_directions(sig.signal.u, r, rng)));
                if (right_room) v_norm = std::sqrt(top_sv_squared(sig.data * complement_directions(sig.signal.v, r, rng)));
                const double bound = std::min(std::max(u_norm, v_norm) / sigma_min, 1.0);
                wedin_samples[b] -= bound * bound;
            }
        }
        est.wedin_bound = percentile(wedin_samples, 100.0 - cfg.bound_percentile);
        est.cutoff = std::max(est.random_bound, est.wedin_bound);
    }

    const double cutoff = est.cutoff - kCutoffSlack * std::max(1.0, std::abs(est.cutoff));
    est.rank = static_cast<Index>((est.joint_sv_squared.array() > cutoff).count());
    return est;
}

AjiveResult ajive(std::span<const Matrix> views, const AjiveConfig& cfg) {
    require(!views.empty(), ErrorKind::InvalidInput, "ajive: no views");
    cfg.validate();
    require(cfg.initial_ranks.empty() || cfg.initial_ranks.size() == 1 || cfg.initial_ranks.size() == views.size(),
            ErrorKind::InvalidInput, "ajive: initial_ranks must have one entry or one per view");
    const Index n = views.front().rows();
    for (const Matrix& x : views) {
        require(x.rows() == n && x.cols() > 0, ErrorKind::InvalidInput, "ajive: views must share a nonzero row count");
        require(x.allFinite(), ErrorKind::InvalidInput, "ajive: view has non-finite entries");
    }

    const std::vector<Index> r_init = resolve_initial_ranks(views, cfg);
    std::vector<ViewSignal> signals;
    signals.reserve(views.size());
    for (std::size_t i = 0; i < views.size(); ++i) {
        AjiveConfig view_cfg = cfg;
        view_cfg.seed = derive_seed(cfg.seed, kPhase1, i);
        ViewSignal sig = initial_extraction(views[i], r_init[i], view_cfg);
        sig.signal = keep_leading(sig.signal, signal_rank(sig.signal.s, r_init[i]));
        signals.push_back(std::move(sig));
    }
    const bool all_zero = std::all_of(signals.begin(), signals.end(), [](const ViewSignal& s) { return s.signal.rank == 0; });
    if (all_zero) return degenerate_result(views, signals);

    std::vector<Matrix> bases;
    bases.reserve(signals.size());
    for (const ViewSignal& s : signals) bases.push_back(s.signal.u);
    AjiveResult out;
    out.estimate = estimate_joint_rank(bases, cfg, signals);

    Index total = 0;
    for (const Matrix& u : bases) total += u.cols();
    Matrix m(n, total);
    Index off = 0;
    for (const Matrix& u : bases) {
        m.middleCols(off, u.cols()) = u;
        off += u.cols();
    }
    const Index joint_rank = std::min({out.estimate.rank, total, n});
    Matrix joint = Matrix(n, 0);
    if (joint_rank > 0) {
        const Matrix candidates = concat_spectrum(m, joint_rank).u;
        std::vector<Index> keep;
        for (Index j = 0; j < candidates.cols(); ++j) {
            bool identifiable = true;
            for (const ViewSignal& s : signals) {
                if (s.signal.rank == 0) continue;
                if ((s.data.transpose() * candidates.col(j)).norm() < s.threshold) {
                    identifiable = false;
                    break;
                }
            }
            if (identifiable) keep.push_back(j);
        }
        joint = Matrix(n, static_cast<Index>(keep.size()));
        for (std::size_t c = 0; c < keep.size(); ++c) joint.col(static_cast<Index>(c)) = candidates.col(keep[c]);
    }
    out.joint_basis = joint;
    out.joint_rank = joint.cols();

    for (std::size_t i = 0; i < signals.size(); ++i) {
        const ViewSignal& s = signals[i];
        Matrix j_part = joint.cols() > 0 ? Matrix(joint * (joint.transpose() * s.data)) : Matrix::Zero(n, s.data.cols());
        const Matrix residual = s.data - j_part;
        Matrix indiv = Matrix::Zero(n, s.data.cols());
        Index indiv_rank = 0;
        if (residual.norm() > 0.0) {
            const Index full = std::min(residual.rows(), residual.cols());
            const Index k = full <= cfg.exact_svd_limit ? full : std::min(r_init[i], full - cfg.rsvd_oversample);
            const SvdFactors rf = truncated_svd(residual, k, cfg, derive_seed(cfg.seed, kPhase3, i));
            while (indiv_rank < rf.s.size() && rf.s(indiv_rank) > s.threshold) ++indiv_rank;
            if (indiv_rank > 0) indiv = linalg::reconstruct(keep_leading(rf, indiv_rank));
        }
        Matrix noise = s.data - j_part - indiv;
        out.joint.push_back(std::move(j_part));
        out.individual.push_back(std::move(indiv));
        out.noise.push_back(std::move(noise));
        out.column_means.push_back(s.column_means);
        out.individual_ranks.push_back(indiv_rank);
    }
    return out;
}

Matrix sync_second_moments(std::span<const Matrix> views, Index joint_rank, std::span<const double> weights,
                           const SyncOptions& options) {
    require(!views.empty(), ErrorKind::InvalidInput, "sync_second_moments: no views");
    require(weights.size() == views.size(), ErrorKind::InvalidInput, "sync_second_moments: one weight per view required");
    double sum = 0.0;
    for (double w : weights) {
        require(w >= 0.0, ErrorKind::InvalidInput, "sync_second_moments: negative weight");
        sum += w;
    }
    require(std::abs(sum - 1.0) <= 1e-12, ErrorKind::InvalidInput, "sync_second_moments: weights must sum to 1");
    require(joint_rank >= 1, ErrorKind::InvalidInput, "sync_second_moments: joint rank must be positive");
    for (const Matrix& v : views)
        require(options.allow_signed_views || v.size() == 0 || v.minCoeff() >= 0.0, ErrorKind::InvalidInput,
                "sync_second_moments: second-moment views must be nonnegative");

    const Index min_dim = std::min(views.front().rows(), views.front().cols());
    require(min_dim >= 2, ErrorKind::InvalidInput, "sync_second_moments: views must be at least 2x2");
    AjiveConfig cfg;
    cfg.center = false;
    cfg.joint_rank = joint_rank;
    cfg.seed = options.seed;
    cfg.initial_ranks = {options.initial_rank.value_or(std::min(2 * joint_rank, min_dim - 1))};
    const AjiveResult res = ajive(views, cfg);

    Matrix avg = Matrix::Zero(views.front().rows(), views.front().cols());
    for (std::size_t i = 0; i < views.size(); ++i) avg += weights[i] * res.joint[i];
    return avg.cwiseMax(0.0);
}

}  // namespace fedlr::ajive
