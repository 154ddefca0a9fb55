// Copyright (C) 2026 The fedlr Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedlr/optim.hpp"

#include <cmath>
#include <string>

#include "fedlr/error.hpp"

namespace fedlr::optim {
namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::InvalidInput,
            std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ")");
}

struct MomentUpdate {
    Matrix m;
    Matrix v;
    Matrix direction;
};

// Shared by the dense and projected optimizers so both follow identical arithmetic.
MomentUpdate adam_moments(const Matrix& m, const Matrix& v, const Matrix& g, const AdamHyper& h, long step) {
    MomentUpdate out;
    out.m = h.beta1 * m + (1.0 - h.beta1) * g;
    out.v = h.beta2 * v + (1.0 - h.beta2) * g.cwiseProduct(g);
    const double t = static_cast<double>(step + 1);
    const double c1 = h.bias_correction ? 1.0 - std::pow(h.beta1, t) : 1.0;
    const double c2 = h.bias_correction ? 1.0 - std::pow(h.beta2, t) : 1.0;
    out.direction = (out.m / c1).array() / ((out.v / c2).array().sqrt() + h.eps);
    return out;
}

Matrix decoupled_update(const Matrix& theta, const Matrix& direction, const AdamHyper& h) {
    return theta - h.lr * direction - (h.lr * h.weight_decay) * theta;
}

}  // namespace

void AdamHyper::validate() const {
    require(lr > 0.0 && std::isfinite(lr), ErrorKind::InvalidInput, "adam: lr must be positive");
    require(beta1 >= 0.0 && beta1 < 1.0, ErrorKind::InvalidInput, "adam: beta1 must lie in [0, 1)");
    require(beta2 >= 0.0 && beta2 < 1.0, ErrorKind::InvalidInput, "adam: beta2 must lie in [0, 1)");
    require(eps > 0.0, ErrorKind::InvalidInput, "adam: eps must be positive");
    require(weight_decay >= 0.0, ErrorKind::InvalidInput, "adam: weight_decay must be nonnegative");
}

DenseAdamState DenseAdamState::zeros(Index rows, Index cols) {
    return {Matrix::Zero(rows, cols), Matrix::Zero(rows, cols), 0};
}

MomentumState MomentumState::zeros(Index rows, Index cols) { return {Matrix::Zero(rows, cols), 0}; }

Matrix clip_by_norm(const Matrix& g, double max_norm) {
    if (max_norm <= 0.0) return g;
    const double norm = g.norm();
    if (norm <= max_norm) return g;
    return g * (max_norm / norm);
}

Matrix sgd_step(const Matrix& theta, const Matrix& g, double eta) {
    require_same_shape(theta, g, "sgd_step");
    return theta - eta * g;
}

MomentumStep momentum_step(const Matrix& theta, const MomentumState& state, const Matrix& g, double eta, double mu) {
    require_same_shape(theta, g, "momentum_step");
    require_same_shape(theta, state.buffer, "momentum_step");
    require(mu >= 0.0 && mu < 1.0, ErrorKind::InvalidInput, "momentum_step: mu must lie in [0, 1)");
    MomentumStep out;
    out.state.buffer = mu * state.buffer + g;
    out.state.step = state.step + 1;
    out.theta = theta - eta * out.state.buffer;
    return out;
}

AdamStep adamw_step(const Matrix& theta, const DenseAdamState& state, const Matrix& g, const AdamHyper& h) {
    require_same_shape(theta, g, "adamw_step");
    require_same_shape(theta, state.m, "adamw_step");
    require_same_shape(theta, state.v, "adamw_step");
    require(state.v.minCoeff() >= 0.0, ErrorKind::InvalidState, "adamw_step: second moment has negative entries");
    h.validate();
    MomentUpdate mu = adam_moments(state.m, state.v, g, h, state.step);
    return {decoupled_update(theta, mu.direction, h), DenseAdamState{std::move(mu.m), std::move(mu.v), state.step + 1}};
}

Side projection_side(Index rows, Index cols) { return rows >= cols ? Side::Right : Side::Left; }

Projector make_projector(const Matrix& g, Index r, const ProjectorMode& mode) {
    const Index rows = g.rows();
    const Index cols = g.cols();
    require(r >= 1 && r <= std::min(rows, cols), ErrorKind::InvalidInput, "make_projector: rank must lie in [1, min(rows, cols)]");
    Projector p;
    p.side = projection_side(rows, cols);
    p.source = mode.kind;
    switch (mode.kind) {
        case ProjectorKind::Seeded: {
            p.seed = mode.seed;
            const Index n = p.side == Side::Right ? cols : rows;
            Matrix rows_basis = linalg::seeded_orthonormal(mode.seed, n, r);
            p.basis = p.side == Side::Right ? std::move(rows_basis) : Matrix(rows_basis.transpose());
            break;
        }
        case ProjectorKind::Svd:
        case ProjectorKind::Rsvd: {
            const bool use_rsvd = mode.kind == ProjectorKind::Rsvd && r + mode.oversample <= std::min(rows, cols);
            const linalg::SvdFactors f = use_rsvd ? linalg::randomized_svd(g, r, mode.oversample, mode.power_iters, mode.seed)
                                                  : linalg::svd(g, r);
            if (p.side == Side::Right)
                p.basis = f.v.transpose();
            else
                p.basis = f.u;
            break;
        }
    }
    return p;
}

Projector projector_from_basis(Matrix basis, Side side) {
    const Matrix gram = side == Side::Right ? Matrix(basis * basis.transpose()) : Matrix(basis.transpose() * basis);
    require((gram - Matrix::Identity(gram.rows(), gram.cols())).norm() < 1e-10, ErrorKind::InvalidInput,
            "projector_from_basis: basis is not orthonormal");
    Projector p;
    p.basis = std::move(basis);
    p.side = side;
    return p;
}

Matrix project(const Matrix& g, const Projector& p) {
    if (p.side == Side::Right) {
        require(g.cols() == p.basis.cols(), ErrorKind::InvalidInput, "project: gradient columns do not match right basis");
        return g * p.basis.transpose();
    }
    require(g.rows() == p.basis.rows(), ErrorKind::InvalidInput, "project: gradient rows do not match left basis");
    return p.basis.transpose() * g;
}

Matrix project_back(const Matrix& u_tilde, const Projector& p) {
    if (p.side == Side::Right) {
        require(u_tilde.cols() == p.basis.rows(), ErrorKind::InvalidInput, "project_back: update does not match right basis");
        return u_tilde * p.basis;
    }
    require(u_tilde.rows() == p.basis.cols(), ErrorKind::InvalidInput, "project_back: update does not match left basis");
    return p.basis * u_tilde;
}

std::pair<Matrix, Matrix> reproject_buffers(const Matrix& m_tilde, const Matrix& v_tilde, const Projector& p_old,
                                            const Projector& p_new, SecondMomentPolicy policy) {
    // TODO: lift-and-reproject fallback for side changes; unreachable with a fixed block shape under the std rule.
    require(p_old.side == p_new.side, ErrorKind::Unsupported, "reproject_buffers: projection side changed");
    require(p_old.rank() == p_new.rank(), ErrorKind::InvalidInput, "reproject_buffers: projector ranks differ");
    require_same_shape(m_tilde, v_tilde, "reproject_buffers");

    Matrix m_new;
    Matrix v_new;
    if (p_old.side == Side::Right) {
        const Matrix change = p_old.basis * p_new.basis.transpose();  // V_old^T V_new
        m_new = m_tilde * change;
        v_new = v_tilde * change;
    } else {
        const Matrix change = p_new.basis.transpose() * p_old.basis;  // U_new^T U_old
        m_new = change * m_tilde;
        v_new = change * v_tilde;
    }
    if (policy == SecondMomentPolicy::Reset)
        v_new.setZero();
    else
        v_new = v_new.cwiseMax(0.0);
    return {std::move(m_new), std::move(v_new)};
}

GaLoreState GaLoreState::fresh(Index rows, Index cols, const GaLoreConfig& cfg) {
    require(cfg.rank >= 1 && cfg.rank <= std::min(rows, cols), ErrorKind::InvalidInput, "galore: rank must lie in [1, min(rows, cols)]");
    require(cfg.refresh_period >= 1, ErrorKind::InvalidInput, "galore: refresh_period must be positive");
    require(cfg.adaptive_refreshes >= 0, ErrorKind::InvalidInput, "galore: adaptive_refreshes must be nonnegative");
    GaLoreState s;
    s.side = projection_side(rows, cols);
    const Index pr = s.side == Side::Right ? rows : cfg.rank;
    const Index pc = s.side == Side::Right ? cfg.rank : cols;
    s.m = Matrix::Zero(pr, pc);
    s.v = Matrix::Zero(pr, pc);
    s.refresh_period = cfg.refresh_period;
    s.adaptive_refreshes_remaining = cfg.adaptive_refreshes;
    s.next_seed = cfg.first_seed;
    s.rank = cfg.rank;
    s.data_driven = cfg.data_driven;
    s.sketch_seed = cfg.sketch_seed;
    s.second_moment_policy = cfg.second_moment_policy;
    return s;
}

GaLoreStep galore_adamw_step(const Matrix& theta, const GaLoreState& state, const Matrix& g, const AdamHyper& h) {
    require_same_shape(theta, g, "galore_adamw_step");
    require(state.v.minCoeff() >= 0.0, ErrorKind::InvalidState, "galore_adamw_step: second moment has negative entries");
    require(state.side == projection_side(theta.rows(), theta.cols()), ErrorKind::InvalidState,
            "galore_adamw_step: state side does not match block shape");
    h.validate();

    GaLoreState next = state;
    const bool due = state.step % state.refresh_period == 0;
    if (due && (state.step > 0 || !state.projector)) {
        ProjectorMode mode;
        if (next.adaptive_refreshes_remaining > 0) {
            mode.kind = next.data_driven;
            mode.seed = next.sketch_seed + static_cast<std::uint64_t>(state.step);
            --next.adaptive_refreshes_remaining;
        } else {
            mode = ProjectorMode::seeded(next.next_seed++);
        }
        Projector fresh = make_projector(g, state.rank, mode);
        if (state.projector) {
            fresh.refresh_count = state.projector->refresh_count + 1;
            std::tie(next.m, next.v) =
                reproject_buffers(state.m, state.v, *state.projector, fresh, state.second_moment_policy);
        }
        next.projector = std::move(fresh);
    }
    require(next.projector.has_value(), ErrorKind::InvalidState, "galore_adamw_step: no projector");

    const Matrix g_tilde = project(g, *next.projector);
    require_same_shape(g_tilde, next.m, "galore_adamw_step");
    MomentUpdate mu = adam_moments(next.m, next.v, g_tilde, h, next.step);
    next.m = std::move(mu.m);
    next.v = std::move(mu.v);
    next.step = state.step + 1;
    Matrix theta_next = decoupled_update(theta, project_back(mu.direction, *next.projector), h);
    return {std::move(theta_next), std::move(next)};
}

}  // namespace fedlr::optim
