// Copyright (C) 2026 The fedlr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedlr/linalg.hpp"
#include "fedlr/random.hpp"

namespace fedlr::tasks {

using linalg::Index;
using linalg::Matrix;

// ---------------------------------------------------------------------------
// Dirichlet label partitioning

struct DirichletPartition {
    double alpha = 1.0;
    std::vector<std::vector<std::size_t>> assignments;  // sample indices per client, sorted
    std::vector<std::vector<double>> proportions;       // per client, per class; each sums to 1
};

/// Draws per-client class proportions from Dir(alpha * 1) and splits every class
/// across clients by largest-remainder rounding, so totals are exact.
DirichletPartition dirichlet_partition(std::span<const int> labels, std::size_t clients, double alpha, std::uint64_t seed);

/// Mean over clients of the number of classes whose proportion exceeds `threshold`.
double mean_classes_above(const DirichletPartition& part, double threshold);

/// labels[i] = i mod classes.
std::vector<int> balanced_labels(std::size_t samples, int classes);

// ---------------------------------------------------------------------------
// Kinetic-trap landscape: a flat basin at c * e2 and a sharp valley through the
// origin elongated along e1, joined by a soft minimum.

struct LandscapeConfig {
    Index dim = 16;
    Index lora_rank = 2;
    double separation = 3.0;         // c
    double flat_curvature = 0.1;     // all eigenvalues of the flat basin
    double sharp_curvature = 10.0;   // valley walls
    double valley_curvature = 0.1;   // valley floor along e1
    double tau = 0.5;
    double noise_std = 0.3;          // per-entry gradient noise
    double lora_init_std = 0.25;     // entry std of the initial LoRA factor A0
    std::uint64_t geometry_seed = 1;
};

struct SoftminLandscape {
    Index dim = 0;
    double tau = 0.5;
    double separation = 3.0;
    double flat_curvature = 0.1;
    double sharp_curvature = 10.0;
    double valley_curvature = 0.1;
    double noise_std = 0.0;
    Matrix e1;       // unit Frobenius norm, row space inside span(lora_a0^T)
    Matrix e2;       // unit Frobenius norm, orthogonal to e1 and to the LoRA row space
    Matrix lora_a0;  // r x d initial LoRA factor shared by all trials

    static SoftminLandscape build(const LandscapeConfig& cfg);
    Matrix flat_center() const { return separation * e2; }
};

struct LossGrad {
    double loss = 0.0;
    Matrix grad;
};

LossGrad flat_basin(const Matrix& w, const SoftminLandscape& land);
LossGrad sharp_valley(const Matrix& w, const SoftminLandscape& land);

/// -tau * log(exp(-L1 / tau) + exp(-L2 / tau)), evaluated with a shifted log-sum-exp.
LossGrad softmin_loss(const Matrix& w, const SoftminLandscape& land);

enum class TrapMethod { FullSgd, Lora, Galore };

const char* to_string(TrapMethod m);
TrapMethod trap_method_from_string(const std::string& s);

struct TrapOptimizer {
    double lr = 0.1;
    long steps = 500;
    double init_noise = 0.02;      // per-entry std of the start perturbation
    double ref_aligned = 2.0;      // W_ref = ref_aligned * e1 + ref_orthogonal * e2
    double ref_orthogonal = 0.0;
    long galore_refresh = 10;
    Index galore_rank = 2;
    double divergence_norm = 1e3;  // terminal norms beyond this count as unconverged

    void validate() const;
};

struct TrialOutcome {
    enum class Basin { Flat, Sharp, Unconverged } basin = Basin::Unconverged;
    Matrix terminal;
};

/// One seeded trial. Trials with the same seed share the start point and noise stream across methods.
TrialOutcome run_landscape_trial(TrapMethod method, const SoftminLandscape& land, const TrapOptimizer& opt, std::uint64_t trial_seed);

struct TrialRates {
    std::size_t trials = 0;
    double flat_rate = 0.0;
    double sharp_rate = 0.0;
    double unconverged_rate = 0.0;
};

TrialRates run_landscape_trials(std::size_t n_trials, TrapMethod method, const SoftminLandscape& land,
                                const TrapOptimizer& opt, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Second-moment views around a rank-5 gradient signal

struct AjiveValidationConfig {
    Index rows = 60;
    Index cols = 40;
    Index clients = 30;
    Index signal_rank = 5;
    Index drift_rank = 2;
    double drift = 1.0;
    double sigma = 0.3;

    void validate() const;
};

struct AjiveValidationData {
    std::vector<Matrix> views;  // (G* + L_k + Xi_k) squared entrywise
    Matrix v_star;              // G* squared entrywise
    Matrix g_star;
};

AjiveValidationData gen_ajive_validation(const AjiveValidationConfig& cfg, std::uint64_t seed);
AjiveValidationData gen_ajive_validation(Index rows, Index cols, Index clients, double sigma, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Heterogeneous quadratic ensemble: F_i(W) = 0.5 * || sqrt(H_i) .* (W - C_i) ||^2

struct QuadEnsembleConfig {
    Index clients = 8;
    Index rows = 8;
    Index cols = 8;
    double curvature_min = 0.5;
    double curvature_max = 2.0;
    double center_spread = 1.0;  // std of client centers around a common center
    double center_offset = 0.0;  // std of the common center
    double noise_std = 0.0;      // per-entry gradient noise
    double clip = 0.0;           // norm clip on returned gradients; 0 disables
    bool dirichlet_weights = false;
    double weight_alpha = 1.0;

    void validate() const;
};

struct QuadEnsemble {
    std::vector<Matrix> centers;     // C_i
    std::vector<Matrix> curvatures;  // H_i, entries > 0
    std::vector<double> weights;     // p_i
    Matrix mean_curvature;           // sum_i p_i H_i
    Matrix optimum;                  // minimizer of f
    double smoothness = 0.0;         // L
    double pl_constant = 0.0;        // mu
    double het_h = 0.0;              // H
    double het_b = 1.0;              // B >= 1
    double noise_std = 0.0;
    double clip = 0.0;

    static QuadEnsemble generate(const QuadEnsembleConfig& cfg, std::uint64_t seed);

    Index rows() const { return centers.front().rows(); }
    Index cols() const { return centers.front().cols(); }
    std::size_t size() const { return centers.size(); }

    double client_loss(const Matrix& w, std::size_t i) const;
    Matrix client_grad(const Matrix& w, std::size_t i) const;
    double global_loss(const Matrix& w) const;
    Matrix global_grad(const Matrix& w) const;
    /// f(W) - f(optimum) >= 0.
    double excess_loss(const Matrix& w) const;
};

struct QuadGradient {
    Matrix grad;    // returned stochastic gradient, clipped when the ensemble clips
    Matrix global;  // grad f
    Matrix drift;   // c_i = grad F_i - grad f
    Matrix noise;   // xi
};

QuadGradient quad_grad(const Matrix& w, std::size_t client, const QuadEnsemble& ens, Rng& rng);
QuadGradient quad_grad(const Matrix& w, std::size_t client, const QuadEnsemble& ens, std::uint64_t batch_seed);

/// Heterogeneity constants (H, B) for fixed curvatures, centers and weights.
/// Exposed so tests can rebuild them after editing an ensemble.
void compute_heterogeneity(QuadEnsemble& ens);

}  // namespace fedlr::tasks
