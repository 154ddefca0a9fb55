// Copyright (C) 2026 The fedlr Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedlr/theory.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "fedlr/error.hpp"
#include "fedlr/optim.hpp"
#include "fedlr/parallel.hpp"
#include "fedlr/random.hpp"

namespace fedlr::theory {

namespace {

enum Stream : std::uint64_t { kStart = 1, kNoise = 2, kBiasM = 3, kBiasV = 4, kCorollaryStart = 5, kCorollaryNoise = 6 };

void require_matches(const tasks::QuadEnsemble& ens, const WhpParams& p, const char* who) {
    require(ens.size() > 0, ErrorKind::InvalidInput, std::string(who) + ": empty ensemble");
    require(static_cast<Index>(ens.size()) == p.clients, ErrorKind::InvalidInput,
            std::string(who) + ": clients must equal the ensemble size");
    require(ens.rows() * ens.cols() == p.dim, ErrorKind::InvalidInput,
            std::string(who) + ": dim must equal the ensemble parameter count");
    require(p.smoothness >= ens.smoothness * (1.0 - 1e-12), ErrorKind::PreconditionViolation,
            std::string(who) + ": L is below the ensemble smoothness");
}

// Random matrix with Frobenius norm exactly `norm`; entries are nonnegative when `nonneg`.
Matrix fixed_norm(Rng& rng, Index rows, Index cols, double norm, bool nonneg) {
    Matrix d = rng.gaussian_matrix(rows, cols);
    if (nonneg) d = d.cwiseAbs();
    const double n = d.norm();
    if (n == 0.0 || norm == 0.0) return Matrix::Zero(rows, cols);
    return d * (norm / n);
}

Matrix clipped_grad(const tasks::QuadEnsemble& ens, const Matrix& w, std::size_t i, double clip) {
    return optim::clip_by_norm(ens.client_grad(w, i), clip);
}

Matrix reference_grad(const tasks::QuadEnsemble& ens, const Matrix& w, double clip) {
    Matrix g = Matrix::Zero(w.rows(), w.cols());
    for (std::size_t i = 0; i < ens.size(); ++i) g += ens.weights[i] * clipped_grad(ens, w, i, clip);
    return g;
}

struct OptState {
    Matrix m;
    Matrix v;
};

void take_step(WhpOptimizer opt, const WhpParams& p, Matrix& w, OptState& s, const Matrix& g) {
    switch (opt) {
        case WhpOptimizer::Sgd:
            w -= p.lr * g;
            return;
        case WhpOptimizer::Momentum:
            s.m = p.beta1 * s.m + (1.0 - p.beta1) * g;
            w -= p.lr * s.m;
            return;
        case WhpOptimizer::AdamW:
            s.m = p.beta1 * s.m + (1.0 - p.beta1) * g;
            s.v = p.beta2 * s.v + (1.0 - p.beta2) * g.cwiseProduct(g);
            w.array() -= p.lr * s.m.array() / (s.v.array() + p.eps).sqrt();
            return;
    }
}

}  // namespace

void WhpParams::validate() const {
    require(sigma >= 0.0, ErrorKind::InvalidInput, "whp: sigma must be nonnegative");
    require(dim >= 1 && clients >= 1 && rounds >= 1 && steps >= 1, ErrorKind::InvalidInput,
            "whp: d, M, K and T must be positive");
    require(delta > 0.0 && delta < 1.0, ErrorKind::InvalidInput, "whp: delta must lie in (0, 1)");
    require(grad_bound >= 0.0 && smoothness >= 0.0, ErrorKind::InvalidInput, "whp: G and L must be nonnegative");
    require(bias_m >= 0.0 && bias_v >= 0.0, ErrorKind::InvalidInput, "whp: state biases must be nonnegative");
    require(lr > 0.0, ErrorKind::InvalidInput, "whp: learning rate must be positive");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, ErrorKind::InvalidInput,
            "whp: betas must lie in [0, 1)");
    require(eps > 0.0, ErrorKind::InvalidInput, "whp: eps must be positive");
}

WhpParams whp_params_for(const tasks::QuadEnsemble& ens) {
    WhpParams p;
    p.dim = ens.rows() * ens.cols();
    p.clients = static_cast<Index>(ens.size());
    p.smoothness = ens.smoothness;
    return p;
}

const char* to_string(WhpOptimizer opt) {
    switch (opt) {
        case WhpOptimizer::Sgd: return "sgd";
        case WhpOptimizer::Momentum: return "momentum";
        case WhpOptimizer::AdamW: return "adamw";
    }
    return "unknown";
}

WhpOptimizer whp_optimizer_from_string(const std::string& name) {
    if (name == "sgd") return WhpOptimizer::Sgd;
    if (name == "momentum") return WhpOptimizer::Momentum;
    if (name == "adamw") return WhpOptimizer::AdamW;
    fail(ErrorKind::InvalidInput, "unknown optimizer '" + name + "' (expected sgd, momentum or adamw)");
}

double noise_envelope(const WhpParams& p) {
    p.validate();
    const double d = static_cast<double>(p.dim);
    const double count = 2.0 * d * static_cast<double>(p.clients) * static_cast<double>(p.rounds) *
                         static_cast<double>(p.steps);
    return p.sigma * std::sqrt(2.0 * d * std::log(count / p.delta));
}

double containment_radius(const WhpParams& p, WhpOptimizer opt) {
    return containment_radius(p, opt, noise_envelope(p));
}

double containment_radius(const WhpParams& p, WhpOptimizer opt, double eps_noise) {
    p.validate();
    require(eps_noise >= 0.0, ErrorKind::InvalidInput, "containment_radius: noise level must be nonnegative");
    const double eta = p.lr;
    const double t = static_cast<double>(p.steps);
    const double g = p.grad_bound;
    if (opt != WhpOptimizer::AdamW) {
        require(eta * p.smoothness * t <= 0.5, ErrorKind::PreconditionViolation,
                "containment_radius: requires eta * L * T <= 1/2");
    }
    switch (opt) {
        case WhpOptimizer::Sgd:
            return 2.0 * eta * t * (2.0 * g + eps_noise);
        case WhpOptimizer::Momentum:
            return 2.0 * eta * p.bias_m / (1.0 - p.beta1) + 4.0 * eta * t * g + 2.0 * eta * t * eps_noise;
        case WhpOptimizer::AdamW: {
            const double root = std::sqrt(p.eps);
            return eta * p.bias_m / ((1.0 - p.beta1) * root) +
                   eta * g * p.bias_v / (2.0 * (1.0 - p.beta2) * p.eps * root) + (eta * t / root) * (3.0 * g + eps_noise);
        }
    }
    return 0.0;
}

EnvelopeReport check_noise_envelope(const WhpParams& p, Index trials, std::uint64_t seed) {
    require(trials >= 1, ErrorKind::InvalidInput, "check_noise_envelope: need at least one trial");
    EnvelopeReport report;
    report.trials = trials;
    report.envelope = noise_envelope(p);
    const Index vectors = p.clients * p.rounds * p.steps;
    std::vector<char> exceeded(static_cast<std::size_t>(trials), 0);
    parallel_for(exceeded.size(), [&](std::size_t r) {
        Rng rng(derive_seed(seed, r));
        double worst = 0.0;
        for (Index j = 0; j < vectors; ++j) {
            double sq = 0.0;
            for (Index c = 0; c < p.dim; ++c) {
                const double z = p.sigma * rng.normal();
                sq += z * z;
            }
            worst = std::max(worst, sq);
        }
        exceeded[r] = std::sqrt(worst) > report.envelope ? 1 : 0;
    });
    for (char e : exceeded) report.exceedances += e;
    report.fraction = static_cast<double>(report.exceedances) / static_cast<double>(trials);
    return report;
}

Index binomial_upper_critical(Index n, double prob, double confidence) {
    require(n >= 0, ErrorKind::InvalidInput, "binomial_upper_critical: n must be nonnegative");
    require(prob >= 0.0 && prob <= 1.0, ErrorKind::InvalidInput, "binomial_upper_critical: prob must lie in [0, 1]");
    require(confidence > 0.0 && confidence < 1.0, ErrorKind::InvalidInput,
            "binomial_upper_critical: confidence must lie in (0, 1)");
    if (prob == 0.0) return 0;
    if (prob == 1.0) return n;
    const double nn = static_cast<double>(n);
    double cdf = 0.0;
    for (Index c = 0; c <= n; ++c) {
        const double k = static_cast<double>(c);
        const double log_pmf = std::lgamma(nn + 1.0) - std::lgamma(k + 1.0) - std::lgamma(nn - k + 1.0) +
                               k * std::log(prob) + (nn - k) * std::log1p(-prob);
        cdf += std::exp(log_pmf);
        if (cdf >= confidence) return c;
    }
    return n;
}

ContainmentReport check_containment(const tasks::QuadEnsemble& ens, const WhpParams& p, WhpOptimizer opt,
                                    Index n_runs, std::uint64_t seed) {
    require(n_runs >= 1, ErrorKind::InvalidInput, "check_containment: need at least one run");
    require_matches(ens, p, "check_containment");
    ContainmentReport report;
    report.runs = n_runs;
    report.bound = containment_radius(p, opt);

    const Index rows = ens.rows();
    const Index cols = ens.cols();
    const std::size_t m = ens.size();
    std::vector<double> run_max(static_cast<std::size_t>(n_runs), 0.0);

    parallel_for(run_max.size(), [&](std::size_t r) {
        const std::uint64_t run_seed = derive_seed(seed, r);
        Rng start_rng(derive_seed(run_seed, kStart));
        Matrix center = ens.optimum + start_rng.gaussian_matrix(rows, cols);
        double worst = 0.0;
        std::vector<Matrix> reference(static_cast<std::size_t>(p.steps) + 1);
        for (Index k = 0; k < p.rounds; ++k) {
            reference[0] = center;
            OptState ref_state{Matrix::Zero(rows, cols), Matrix::Zero(rows, cols)};
            for (Index t = 0; t < p.steps; ++t) {
                Matrix w = reference[t];
                take_step(opt, p, w, ref_state, reference_grad(ens, reference[t], p.grad_bound));
                reference[t + 1] = std::move(w);
            }
            Matrix next = Matrix::Zero(rows, cols);
            for (std::size_t i = 0; i < m; ++i) {
                const std::uint64_t slot = static_cast<std::uint64_t>(k) * m + i;
                Rng noise_rng(derive_seed(run_seed, kNoise, slot));
                Rng bias_m_rng(derive_seed(run_seed, kBiasM, slot));
                Rng bias_v_rng(derive_seed(run_seed, kBiasV, slot));
                OptState state{fixed_norm(bias_m_rng, rows, cols, p.bias_m, false),
                               fixed_norm(bias_v_rng, rows, cols, p.bias_v, true)};
                Matrix w = center;
                for (Index t = 0; t < p.steps; ++t) {
                    Matrix noisy = ens.client_grad(w, i);
                    if (p.sigma > 0.0) noisy += p.sigma * noise_rng.gaussian_matrix(rows, cols);
                    take_step(opt, p, w, state, optim::clip_by_norm(noisy, p.grad_bound));
                    worst = std::max(worst, (w - reference[t + 1]).norm());
                }
                next += ens.weights[i] * w;
            }
            center = std::move(next);
        }
        run_max[r] = worst;
    });

    double sum = 0.0;
    for (double dev : run_max) {
        if (dev > report.bound) ++report.violations;
        report.max_deviation = std::max(report.max_deviation, dev);
        sum += dev;
    }
    report.mean_max_deviation = sum / static_cast<double>(n_runs);
    report.violation_fraction = static_cast<double>(report.violations) / static_cast<double>(n_runs);
    return report;
}

double rms_corollary_bound(double lr, Index steps, double het_h, double het_b, double grad_bound, double sigma) {
    const double spread = het_h * het_h + (het_b * het_b - 1.0) * grad_bound * grad_bound;
    return 2.0 * lr * static_cast<double>(steps) * (std::sqrt(std::max(spread, 0.0)) + sigma);
}

CorollaryReport check_rms_corollary(const tasks::QuadEnsemble& ens, const WhpParams& p, Index n_runs,
                                    std::uint64_t seed) {
    require(n_runs >= 1, ErrorKind::InvalidInput, "check_rms_corollary: need at least one run");
    p.validate();
    require_matches(ens, p, "check_rms_corollary");
    require(p.lr * p.smoothness * static_cast<double>(p.steps) <= 1.0 / 6.0, ErrorKind::PreconditionViolation,
            "check_rms_corollary: requires eta * L * T <= 1/6");

    const Index rows = ens.rows();
    const Index cols = ens.cols();

    // Start on the sphere ||grad f|| = G around the optimum.
    Rng start_rng(derive_seed(seed, kCorollaryStart));
    const Matrix dir = start_rng.gaussian_matrix(rows, cols);
    const Matrix grad_dir = ens.mean_curvature.cwiseProduct(dir);
    Matrix start = ens.optimum;
    if (p.grad_bound > 0.0 && grad_dir.norm() > 0.0) start += dir * (p.grad_bound / grad_dir.norm());

    Matrix reference = start;
    for (Index t = 0; t < p.steps; ++t) reference -= p.lr * ens.global_grad(reference);

    const double noise_std = p.sigma / std::sqrt(static_cast<double>(p.dim));
    std::vector<double> gaps(static_cast<std::size_t>(n_runs), 0.0);
    parallel_for(gaps.size(), [&](std::size_t r) {
        Matrix avg = Matrix::Zero(rows, cols);
        for (std::size_t i = 0; i < ens.size(); ++i) {
            Rng noise_rng(derive_seed(seed, kCorollaryNoise, static_cast<std::uint64_t>(r) * ens.size() + i));
            Matrix w = start;
            for (Index t = 0; t < p.steps; ++t) {
                Matrix g = ens.client_grad(w, i);
                if (noise_std > 0.0) g += noise_std * noise_rng.gaussian_matrix(rows, cols);
                w -= p.lr * g;
            }
            avg += ens.weights[i] * w;
        }
        gaps[r] = (avg - reference).norm();
    });

    CorollaryReport report;
    double sum = 0.0;
    for (double g : gaps) sum += g;
    report.lhs = sum / static_cast<double>(n_runs);
    report.rhs = rms_corollary_bound(p.lr, p.steps, ens.het_h, ens.het_b, p.grad_bound, p.sigma);
    // Round-off slack so that an exact zero bound admits a floating-point zero gap.
    report.holds = report.lhs <= report.rhs + 1e-12 * std::max(1.0, start.norm());
    return report;
}

}  // namespace fedlr::theory
