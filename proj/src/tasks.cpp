// Copyright (C) 2026 The fedlr Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedlr/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "fedlr/error.hpp"
#include "fedlr/optim.hpp"

namespace fedlr::tasks {
namespace {

enum Stream : std::uint64_t {
    kProportions = 1,
    kShuffle = 2,
    kTrialInit = 3,
    kTrialNoise = 4,
    kGeometry = 5,
    kSignal = 6,
    kClientView = 7,
    kEnsemble = 8,
};

// Splits `count` items by `shares` (nonnegative, positive sum) with largest remainders.
std::vector<std::size_t> largest_remainder(std::size_t count, const std::vector<double>& shares) {
    const double total = std::accumulate(shares.begin(), shares.end(), 0.0);
    std::vector<std::size_t> out(shares.size(), 0);
    std::vector<std::pair<double, std::size_t>> rem;
    std::size_t used = 0;
    for (std::size_t i = 0; i < shares.size(); ++i) {
        const double exact = static_cast<double>(count) * shares[i] / total;
        out[i] = static_cast<std::size_t>(std::floor(exact));
        used += out[i];
        rem.emplace_back(exact - std::floor(exact), i);
    }
    // Ties resolve toward lower client indices.
    std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; used < count; ++k, ++used) ++out[rem[k % rem.size()].second];
    return out;
}

Matrix unit(const Matrix& m) { return m / m.norm(); }

}  // namespace

// ---------------------------------------------------------------------------

std::vector<int> balanced_labels(std::size_t samples, int classes) {
    require(classes >= 1, ErrorKind::InvalidInput, "balanced_labels: need at least one class");
    std::vector<int> out(samples);
    for (std::size_t i = 0; i < samples; ++i) out[i] = static_cast<int>(i % static_cast<std::size_t>(classes));
    return out;
}

DirichletPartition dirichlet_partition(std::span<const int> labels, std::size_t clients, double alpha, std::uint64_t seed) {
    require(alpha > 0.0 && std::isfinite(alpha), ErrorKind::InvalidInput, "dirichlet_partition: alpha must be positive");
    require(clients >= 1, ErrorKind::InvalidInput, "dirichlet_partition: need at least one client");
    require(labels.size() >= clients, ErrorKind::InvalidInput, "dirichlet_partition: fewer samples than clients");

    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        require(labels[i] >= 0, ErrorKind::InvalidInput, "dirichlet_partition: labels must be nonnegative");
        by_class[labels[i]].push_back(i);
    }
    const std::size_t n_classes = by_class.size();

    DirichletPartition part;
    part.alpha = alpha;
    part.proportions.assign(clients, std::vector<double>(n_classes, 0.0));
    Rng prop_rng(derive_seed(seed, kProportions));
    for (auto& p : part.proportions) {
        double sum = 0.0;
        for (double& x : p) sum += (x = prop_rng.gamma(alpha));
        if (sum > 0.0) {
            for (double& x : p) x /= sum;
        } else {
            // Every gamma draw underflowed; put the mass on one uniformly chosen class.
            p[prop_rng.uniform_index(n_classes)] = 1.0;
        }
    }

    part.assignments.assign(clients, {});
    Rng shuffle_rng(derive_seed(seed, kShuffle));
    std::size_t k = 0;
    for (auto& [label, members] : by_class) {
        for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[shuffle_rng.uniform_index(i)]);
        std::vector<double> shares(clients);
        for (std::size_t c = 0; c < clients; ++c) shares[c] = part.proportions[c][k];
        if (std::accumulate(shares.begin(), shares.end(), 0.0) <= 0.0) std::fill(shares.begin(), shares.end(), 1.0);
        const auto counts = largest_remainder(members.size(), shares);
        std::size_t offset = 0;
        for (std::size_t c = 0; c < clients; ++c) {
            part.assignments[c].insert(part.assignments[c].end(), members.begin() + static_cast<std::ptrdiff_t>(offset),
                                       members.begin() + static_cast<std::ptrdiff_t>(offset + counts[c]));
            offset += counts[c];
        }
        ++k;
    }
    for (auto& a : part.assignments) std::sort(a.begin(), a.end());
    return part;
}

double mean_classes_above(const DirichletPartition& part, double threshold) {
    if (part.proportions.empty()) return 0.0;
    double total = 0.0;
    for (const auto& p : part.proportions)
        total += static_cast<double>(std::count_if(p.begin(), p.end(), [&](double x) { return x > threshold; }));
    return total / static_cast<double>(part.proportions.size());
}

// ---------------------------------------------------------------------------

SoftminLandscape SoftminLandscape::build(const LandscapeConfig& cfg) {
    require(cfg.dim >= 3 && cfg.lora_rank >= 1 && cfg.lora_rank < cfg.dim, ErrorKind::InvalidInput,
            "landscape: need dim >= 3 and 1 <= lora_rank < dim");
    require(cfg.tau > 0.0, ErrorKind::InvalidInput, "landscape: tau must be positive");
    require(cfg.flat_curvature > 0.0 && cfg.sharp_curvature > 0.0 && cfg.valley_curvature > 0.0, ErrorKind::InvalidInput,
            "landscape: curvatures must be positive");
    require(cfg.noise_std >= 0.0, ErrorKind::InvalidInput, "landscape: noise_std must be nonnegative");
    require(cfg.lora_init_std > 0.0, ErrorKind::InvalidInput, "landscape: lora_init_std must be positive");

    SoftminLandscape land;
    land.dim = cfg.dim;
    land.tau = cfg.tau;
    land.separation = cfg.separation;
    land.flat_curvature = cfg.flat_curvature;
    land.sharp_curvature = cfg.sharp_curvature;
    land.valley_curvature = cfg.valley_curvature;
    land.noise_std = cfg.noise_std;

    const std::uint64_t geo = derive_seed(cfg.geometry_seed, kGeometry);
    Rng a_rng(derive_seed(geo, 0));
    land.lora_a0 = cfg.lora_init_std * a_rng.gaussian_matrix(cfg.lora_rank, cfg.dim);

    const Matrix row_space = linalg::orthonormalize_columns(land.lora_a0.transpose());  // d x r
    Rng rng(derive_seed(geo, 1));
    Matrix x = rng.gaussian_matrix(cfg.dim, 1);
    x -= row_space * (row_space.transpose() * x);
    const Matrix v2 = x / x.norm();
    const Matrix u = linalg::orthonormalize_columns(rng.gaussian_matrix(cfg.dim, 2));
    land.e1 = unit(u.col(0) * row_space.col(0).transpose());
    land.e2 = unit(u.col(1) * v2.transpose());
    return land;
}

LossGrad flat_basin(const Matrix& w, const SoftminLandscape& land) {
    const Matrix diff = w - land.flat_center();
    return {0.5 * land.flat_curvature * diff.squaredNorm(), land.flat_curvature * diff};
}

LossGrad sharp_valley(const Matrix& w, const SoftminLandscape& land) {
    const double along = (w.array() * land.e1.array()).sum();
    const Matrix perp = w - along * land.e1;
    return {0.5 * (land.valley_curvature * along * along + land.sharp_curvature * perp.squaredNorm()),
            land.valley_curvature * along * land.e1 + land.sharp_curvature * perp};
}

LossGrad softmin_loss(const Matrix& w, const SoftminLandscape& land) {
    require(w.rows() == land.dim && w.cols() == land.dim, ErrorKind::InvalidInput, "softmin_loss: shape mismatch");
    const LossGrad a = flat_basin(w, land);
    const LossGrad b = sharp_valley(w, land);
    const double lo = std::min(a.loss, b.loss);
    const double wa = std::exp(-(a.loss - lo) / land.tau);
    const double wb = std::exp(-(b.loss - lo) / land.tau);
    const double s = wa + wb;
    return {lo - land.tau * std::log(s), (wa * a.grad + wb * b.grad) / s};
}

const char* to_string(TrapMethod m) {
    switch (m) {
        case TrapMethod::FullSgd: return "full_sgd";
        case TrapMethod::Lora: return "lora";
        case TrapMethod::Galore: return "galore";
    }
    return "?";
}

TrapMethod trap_method_from_string(const std::string& s) {
    if (s == "full_sgd") return TrapMethod::FullSgd;
    if (s == "lora") return TrapMethod::Lora;
    if (s == "galore") return TrapMethod::Galore;
    fail(ErrorKind::InvalidInput, "unknown landscape method '" + s + "'");
}

void TrapOptimizer::validate() const {
    require(lr > 0.0, ErrorKind::InvalidInput, "landscape: lr must be positive");
    require(steps >= 1, ErrorKind::InvalidInput, "landscape: steps must be positive");
    require(init_noise >= 0.0, ErrorKind::InvalidInput, "landscape: init_noise must be nonnegative");
    require(galore_refresh >= 1 && galore_rank >= 1, ErrorKind::InvalidInput, "landscape: invalid galore settings");
    require(divergence_norm > 0.0, ErrorKind::InvalidInput, "landscape: divergence_norm must be positive");
}

TrialOutcome run_landscape_trial(TrapMethod method, const SoftminLandscape& land, const TrapOptimizer& opt,
                                 std::uint64_t trial_seed) {
    const Index d = land.dim;
    Rng init_rng(derive_seed(trial_seed, kTrialInit));
    Rng noise_rng(derive_seed(trial_seed, kTrialNoise));
    const Matrix w_start = opt.ref_aligned * land.e1 + opt.ref_orthogonal * land.e2 + opt.init_noise * init_rng.gaussian_matrix(d, d);
    auto noisy_grad = [&](const Matrix& w) {
        Matrix g = softmin_loss(w, land).grad;
        if (land.noise_std > 0.0) g += land.noise_std * noise_rng.gaussian_matrix(d, d);
        return g;
    };

    Matrix w = w_start;
    switch (method) {
        case TrapMethod::FullSgd:
            for (long t = 0; t < opt.steps; ++t) w = optim::sgd_step(w, noisy_grad(w), opt.lr);
            break;
        case TrapMethod::Lora: {
            Matrix a = land.lora_a0;
            Matrix b = Matrix::Zero(d, a.rows());
            for (long t = 0; t < opt.steps; ++t) {
                const Matrix g = noisy_grad(w_start + b * a);
                const Matrix gb = g * a.transpose();
                const Matrix ga = b.transpose() * g;
                b -= opt.lr * gb;
                a -= opt.lr * ga;
            }
            w = w_start + b * a;
            break;
        }
        case TrapMethod::Galore: {
            optim::Projector p;
            for (long t = 0; t < opt.steps; ++t) {
                const Matrix g = noisy_grad(w);
                if (!g.allFinite()) {
                    w = g;
                    break;
                }
                if (t % opt.galore_refresh == 0) p = optim::make_projector(g, opt.galore_rank, optim::ProjectorMode::svd());
                w -= opt.lr * optim::project_back(optim::project(g, p), p);
            }
            break;
        }
    }

    TrialOutcome out;
    out.terminal = w;
    if (!w.allFinite() || w.norm() > opt.divergence_norm)
        out.basin = TrialOutcome::Basin::Unconverged;
    else
        out.basin = (w - land.flat_center()).norm() < w.norm() ? TrialOutcome::Basin::Flat : TrialOutcome::Basin::Sharp;
    return out;
}

TrialRates run_landscape_trials(std::size_t n_trials, TrapMethod method, const SoftminLandscape& land,
                                const TrapOptimizer& opt, std::uint64_t seed) {
    require(n_trials >= 1, ErrorKind::InvalidInput, "run_landscape_trials: need at least one trial");
    opt.validate();
    std::size_t flat = 0, sharp = 0, lost = 0;
    for (std::size_t i = 0; i < n_trials; ++i) {
        switch (run_landscape_trial(method, land, opt, derive_seed(seed, i)).basin) {
            case TrialOutcome::Basin::Flat: ++flat; break;
            case TrialOutcome::Basin::Sharp: ++sharp; break;
            case TrialOutcome::Basin::Unconverged: ++lost; break;
        }
    }
    const auto n = static_cast<double>(n_trials);
    return {n_trials, static_cast<double>(flat) / n, static_cast<double>(sharp) / n, static_cast<double>(lost) / n};
}

// ---------------------------------------------------------------------------

void AjiveValidationConfig::validate() const {
    require(rows >= 5 && cols >= 5, ErrorKind::InvalidInput, "ajive validation: dimensions must be at least 5");
    require(signal_rank >= 1 && signal_rank <= std::min(rows, cols), ErrorKind::InvalidInput,
            "ajive validation: signal rank out of range");
    require(drift_rank >= 1 && clients >= 1, ErrorKind::InvalidInput, "ajive validation: need clients and drift rank");
    require(drift >= 0.0 && sigma >= 0.0, ErrorKind::InvalidInput, "ajive validation: drift and sigma must be nonnegative");
}

AjiveValidationData gen_ajive_validation(const AjiveValidationConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(derive_seed(seed, kSignal));
    const Matrix u = linalg::orthonormalize_columns(rng.gaussian_matrix(cfg.rows, cfg.signal_rank));
    const Matrix v = linalg::orthonormalize_columns(rng.gaussian_matrix(cfg.cols, cfg.signal_rank));
    // Spectrum decays linearly from 2 to 1, scaled to unit mean-square entries per component.
    linalg::Vector s = linalg::Vector::LinSpaced(cfg.signal_rank, 2.0, 1.0);
    if (cfg.signal_rank == 1) s(0) = 2.0;
    s *= std::sqrt(static_cast<double>(cfg.rows * cfg.cols) / static_cast<double>(cfg.signal_rank));

    AjiveValidationData out;
    out.g_star = u * s.asDiagonal() * v.transpose();
    out.v_star = out.g_star.cwiseAbs2();
    const double drift_scale = cfg.drift / std::sqrt(static_cast<double>(cfg.drift_rank));
    for (Index k = 0; k < cfg.clients; ++k) {
        Rng crng(derive_seed(seed, kClientView, static_cast<std::uint64_t>(k)));
        const Matrix left = crng.gaussian_matrix(cfg.rows, cfg.drift_rank);
        const Matrix right = crng.gaussian_matrix(cfg.drift_rank, cfg.cols);
        const Matrix noise = crng.gaussian_matrix(cfg.rows, cfg.cols);
        const Matrix g = out.g_star + drift_scale * left * right + cfg.sigma * noise;
        out.views.push_back(g.cwiseAbs2());
    }
    return out;
}

AjiveValidationData gen_ajive_validation(Index rows, Index cols, Index clients, double sigma, std::uint64_t seed) {
    AjiveValidationConfig cfg;
    cfg.rows = rows;
    cfg.cols = cols;
    cfg.clients = clients;
    cfg.sigma = sigma;
    return gen_ajive_validation(cfg, seed);
}

// ---------------------------------------------------------------------------

void QuadEnsembleConfig::validate() const {
    require(clients >= 1 && rows >= 1 && cols >= 1, ErrorKind::InvalidInput, "quad ensemble: sizes must be positive");
    require(curvature_min > 0.0 && curvature_max >= curvature_min, ErrorKind::InvalidInput,
            "quad ensemble: need 0 < curvature_min <= curvature_max");
    require(center_spread >= 0.0 && center_offset >= 0.0 && noise_std >= 0.0 && clip >= 0.0, ErrorKind::InvalidInput,
            "quad ensemble: spreads, noise and clip must be nonnegative");
    require(!dirichlet_weights || weight_alpha > 0.0, ErrorKind::InvalidInput, "quad ensemble: weight_alpha must be positive");
}

QuadEnsemble QuadEnsemble::generate(const QuadEnsembleConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(derive_seed(seed, kEnsemble));
    QuadEnsemble ens;
    const Matrix common = cfg.center_offset * rng.gaussian_matrix(cfg.rows, cfg.cols);
    for (Index i = 0; i < cfg.clients; ++i) {
        ens.centers.push_back(common + cfg.center_spread * rng.gaussian_matrix(cfg.rows, cfg.cols));
        Matrix h(cfg.rows, cfg.cols);
        for (Index r = 0; r < cfg.rows; ++r)
            for (Index c = 0; c < cfg.cols; ++c) h(r, c) = cfg.curvature_min + (cfg.curvature_max - cfg.curvature_min) * rng.uniform();
        ens.curvatures.push_back(std::move(h));
    }
    const auto m = static_cast<std::size_t>(cfg.clients);
    if (cfg.dirichlet_weights) {
        ens.weights.resize(m);
        double sum = 0.0;
        for (double& w : ens.weights) sum += (w = rng.gamma(cfg.weight_alpha));
        for (double& w : ens.weights) w /= sum;
    } else {
        ens.weights.assign(m, 1.0 / static_cast<double>(m));
    }
    ens.noise_std = cfg.noise_std;
    ens.clip = cfg.clip;
    compute_heterogeneity(ens);
    return ens;
}

void compute_heterogeneity(QuadEnsemble& ens) {
    require(!ens.centers.empty() && ens.centers.size() == ens.curvatures.size() && ens.weights.size() == ens.centers.size(),
            ErrorKind::InvalidInput, "quad ensemble: inconsistent client data");
    const Index rows = ens.rows(), cols = ens.cols();
    Matrix a_bar = Matrix::Zero(rows, cols), b_bar = Matrix::Zero(rows, cols);
    Matrix a2 = Matrix::Zero(rows, cols), ab = Matrix::Zero(rows, cols), b2 = Matrix::Zero(rows, cols);
    ens.smoothness = 0.0;
    for (std::size_t i = 0; i < ens.size(); ++i) {
        const Matrix& a = ens.curvatures[i];
        require(a.minCoeff() > 0.0, ErrorKind::InvalidInput, "quad ensemble: curvatures must be positive");
        const Matrix b = a.cwiseProduct(ens.centers[i]);
        const double p = ens.weights[i];
        a_bar += p * a;
        b_bar += p * b;
        a2 += p * a.cwiseAbs2();
        ab += p * a.cwiseProduct(b);
        b2 += p * b.cwiseAbs2();
        ens.smoothness = std::max(ens.smoothness, a.maxCoeff());
    }
    ens.mean_curvature = a_bar;
    ens.optimum = b_bar.cwiseQuotient(a_bar);
    ens.pl_constant = a_bar.minCoeff();

    // Per entry, sum_i p_i (a_i x - b_i)^2 - B^2 (a_bar x - b_bar)^2 is a concave quadratic in x
    // once B^2 >= max of sum_i p_i a_i^2 / a_bar^2; H^2 sums its maxima.
    const double ratio = a2.cwiseQuotient(a_bar.cwiseAbs2()).maxCoeff();
    const double b_sq = ratio <= 1.0 + 1e-12 ? 1.0 : 1.25 * ratio;
    double h_sq = 0.0;
    for (Index r = 0; r < rows; ++r) {
        for (Index c = 0; c < cols; ++c) {
            const double alpha = a2(r, c) - b_sq * a_bar(r, c) * a_bar(r, c);
            const double beta = -2.0 * (ab(r, c) - b_sq * a_bar(r, c) * b_bar(r, c));
            const double gamma = b2(r, c) - b_sq * b_bar(r, c) * b_bar(r, c);
            const double peak = alpha < -1e-14 * a2(r, c) ? gamma - beta * beta / (4.0 * alpha) : gamma;
            h_sq += std::max(0.0, peak);
        }
    }
    ens.het_b = std::sqrt(b_sq);
    ens.het_h = std::sqrt(h_sq);
}

double QuadEnsemble::client_loss(const Matrix& w, std::size_t i) const {
    return 0.5 * (curvatures[i].array() * (w - centers[i]).array().square()).sum();
}

Matrix QuadEnsemble::client_grad(const Matrix& w, std::size_t i) const { return curvatures[i].cwiseProduct(w - centers[i]); }

double QuadEnsemble::global_loss(const Matrix& w) const {
    double total = 0.0;
    for (std::size_t i = 0; i < size(); ++i) total += weights[i] * client_loss(w, i);
    return total;
}

Matrix QuadEnsemble::global_grad(const Matrix& w) const {
    Matrix g = Matrix::Zero(w.rows(), w.cols());
    for (std::size_t i = 0; i < size(); ++i) g += weights[i] * client_grad(w, i);
    return g;
}

double QuadEnsemble::excess_loss(const Matrix& w) const { return 0.5 * (mean_curvature.array() * (w - optimum).array().square()).sum(); }

QuadGradient quad_grad(const Matrix& w, std::size_t client, const QuadEnsemble& ens, Rng& rng) {
    require(client < ens.size(), ErrorKind::InvalidInput, "quad_grad: client index out of range");
    require(w.rows() == ens.rows() && w.cols() == ens.cols(), ErrorKind::InvalidInput, "quad_grad: shape mismatch");
    QuadGradient out;
    const Matrix local = ens.client_grad(w, client);
    out.global = ens.global_grad(w);
    out.drift = local - out.global;
    out.noise = ens.noise_std > 0.0 ? Matrix(ens.noise_std * rng.gaussian_matrix(w.rows(), w.cols()))
                                    : Matrix(Matrix::Zero(w.rows(), w.cols()));
    out.grad = optim::clip_by_norm(local + out.noise, ens.clip);
    return out;
}

QuadGradient quad_grad(const Matrix& w, std::size_t client, const QuadEnsemble& ens, std::uint64_t batch_seed) {
    Rng rng(batch_seed);
    return quad_grad(w, client, ens, rng);
}

}  // namespace fedlr::tasks
