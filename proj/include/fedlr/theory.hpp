// Copyright (C) 2026 The fedlr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include "fedlr/tasks.hpp"

namespace fedlr::theory {

using linalg::Index;
using linalg::Matrix;

/// Constants of the high-probability stability framework.
struct WhpParams {
    double sigma = 0.0;    // sub-Gaussian noise parameter
    Index dim = 1;         // d
    Index clients = 1;     // M
    Index rounds = 1;      // K
    Index steps = 1;       // T
    double delta = 0.05;   // failure probability, in (0, 1)
    double grad_bound = 1.0;  // G
    double smoothness = 1.0;  // L
    double bias_m = 0.0;   // B_m
    double bias_v = 0.0;   // B_v
    double lr = 0.01;      // eta
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const;
};

/// Defaults with d, M and L taken from the ensemble.
WhpParams whp_params_for(const tasks::QuadEnsemble& ens);

enum class WhpOptimizer { Sgd, Momentum, AdamW };

const char* to_string(WhpOptimizer opt);
WhpOptimizer whp_optimizer_from_string(const std::string& name);

/// sigma * sqrt(2 d ln(2 d M K T / delta)).
double noise_envelope(const WhpParams& p);

/// Local-containment radius with the noise envelope of p.
///
///   sgd:      2 eta T (2G + e)
///   momentum: 2 eta B_m / (1 - b1) + 4 eta T G + 2 eta T e
///   adamw:    eta B_m / ((1 - b1) sqrt(eps)) + eta G B_v / (2 (1 - b2) eps^1.5)
///             + (eta T / sqrt(eps)) (3G + e)
///
/// SGD and momentum require eta L T <= 1/2 (precondition-violation otherwise).
double containment_radius(const WhpParams& p, WhpOptimizer opt);
/// Same with an explicit noise level e in place of the envelope.
double containment_radius(const WhpParams& p, WhpOptimizer opt, double eps_noise);

struct EnvelopeReport {
    Index trials = 0;
    Index exceedances = 0;  // trials whose largest noise norm exceeds the envelope
    double fraction = 0.0;
    double envelope = 0.0;
};

/// Per trial, draws M * K * T Gaussian vectors of dimension d
/// with per-entry std sigma, and counts trials whose largest norm exceeds the
/// envelope.
EnvelopeReport check_noise_envelope(const WhpParams& p, Index trials, std::uint64_t seed);

/// Smallest c with P(X <= c) >= confidence for X ~ Binomial(n, prob). A count
/// above c rejects "rate <= prob" in a one-sided test at that confidence.
Index binomial_upper_critical(Index n, double prob, double confidence);

struct ContainmentReport {
    Index runs = 0;
    Index violations = 0;
    double violation_fraction = 0.0;
    double max_deviation = 0.0;       // over all runs
    double mean_max_deviation = 0.0;  // per-run maximum, averaged
    double bound = 0.0;
};

/// Monte-Carlo containment check on a quadratic ensemble.
///
/// Each run simulates K rounds of M clients (all ensemble clients take part,
/// so M = ens.size() and d = ens.rows() * ens.cols() must match p). Clients
/// take T steps on clip_G(grad F_i + xi), xi ~ N(0, sigma^2 I). The reference
/// takes the same optimizer's deterministic steps on sum_i p_i clip_G(grad F_i)
/// from the same round start, with zero optimizer state. Client states start at
/// the reference state plus a random offset of norm exactly B_m (and B_v, with
/// nonnegative entries). The round ends with the weighted client average.
/// A run is a violation when any ||theta_t - theta*_t|| exceeds the radius.
///
/// Random directions, noise and starts come from streams that do not depend
/// on B_m or B_v, so sweeps over the biases share their randomness.
ContainmentReport check_containment(const tasks::QuadEnsemble& ens, const WhpParams& p, WhpOptimizer opt,
                                    Index n_runs, std::uint64_t seed);

struct CorollaryReport {
    double lhs = 0.0;  // Monte-Carlo mean of ||theta_bar - theta*_T||
    double rhs = 0.0;  // 2 eta T (sqrt(H^2 + (B^2 - 1) G^2) + sigma)
    bool holds = false;
};

/// One round of full-participation local SGD against T steps of gradient
/// descent on f, both from a start with ||grad f|| = G. Client noise has
/// E||xi||^2 = sigma^2 (per-entry std sigma / sqrt(d)); gradients are not
/// clipped. Requires eta L T <= 1/6 with L >= the ensemble smoothness.
CorollaryReport check_rms_corollary(const tasks::QuadEnsemble& ens, const WhpParams& p, Index n_runs,
                                    std::uint64_t seed);

/// 2 eta T (sqrt(H^2 + (B^2 - 1) G^2) + sigma).
double rms_corollary_bound(double lr, Index steps, double het_h, double het_b, double grad_bound, double sigma);

}  // namespace fedlr::theory
