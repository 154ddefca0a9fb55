// Copyright (C) 2026 The fedlr Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedlr/fedsim.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <cmath>
#include <memory>
#include <numeric>

#include "fedlr/ajive.hpp"
#include "fedlr/error.hpp"
#include "fedlr/parallel.hpp"

namespace fedlr::fedsim {

namespace {

enum Stream : std::uint64_t { kParticipation = 1, kBatch = 2, kLoraA = 3, kSync = 4 };

void require_finite(const Matrix& m, Index step, const char* what) {
    if (!linalg::all_finite(m))
        fail(ErrorKind::Diverged, std::string("local_train: non-finite ") + what + " at step " + std::to_string(step));
}

Matrix lora_a_for_round(const GlobalState& gs, const FedConfig& cfg, Index cols) {
    // frozen_a keeps one A for the whole run; the other modes merge and redraw each round.
    const std::uint64_t seed = cfg.aggregation == AggregationKind::FrozenA
                                   ? derive_seed(cfg.master_seed, kLoraA)
                                   : derive_seed(cfg.master_seed, kLoraA, static_cast<std::uint64_t>(gs.round));
    Rng rng(seed);
    return rng.gaussian_matrix(cfg.rank, cols) / std::sqrt(static_cast<double>(cfg.rank));
}

optim::GaLoreConfig galore_config(const FedConfig& cfg, std::uint64_t first_seed, long adaptive) {
    optim::GaLoreConfig g;
    g.rank = cfg.rank;
    g.refresh_period = cfg.galore_refresh;
    g.adaptive_refreshes = adaptive;
    g.first_seed = first_seed;
    g.sketch_seed = derive_seed(cfg.master_seed, kSync, first_seed);
    return g;
}

}  // namespace

const char* to_string(OptimizerKind kind) {
    switch (kind) {
        case OptimizerKind::Sgd: return "sgd";
        case OptimizerKind::Momentum: return "momentum";
        case OptimizerKind::AdamW: return "adamw";
        case OptimizerKind::GaloreAdamW: return "galore_adamw";
        case OptimizerKind::LoraAdamW: return "lora_adamw";
        case OptimizerKind::LoraSgd: return "lora_sgd";
    }
    return "unknown";
}

const char* to_string(AggregationKind kind) {
    switch (kind) {
        case AggregationKind::FedAvgDense: return "fedavg_dense";
        case AggregationKind::FactorProduct: return "factor_product";
        case AggregationKind::FrozenA: return "frozen_a";
        case AggregationKind::Lifted: return "lifted";
    }
    return "unknown";
}

const char* to_string(SyncMode mode) {
    switch (mode) {
        case SyncMode::None: return "none";
        case SyncMode::ServerOnly: return "server_only";
        case SyncMode::Ajive: return "ajive";
    }
    return "unknown";
}

OptimizerKind optimizer_from_string(const std::string& name) {
    for (auto k : {OptimizerKind::Sgd, OptimizerKind::Momentum, OptimizerKind::AdamW, OptimizerKind::GaloreAdamW,
                   OptimizerKind::LoraAdamW, OptimizerKind::LoraSgd})
        if (name == to_string(k)) return k;
    fail(ErrorKind::InvalidInput, "unknown optimizer '" + name + "'");
}

AggregationKind aggregation_from_string(const std::string& name) {
    for (auto k : {AggregationKind::FedAvgDense, AggregationKind::FactorProduct, AggregationKind::FrozenA,
                   AggregationKind::Lifted})
        if (name == to_string(k)) return k;
    fail(ErrorKind::InvalidInput, "unknown aggregation '" + name + "'");
}

SyncMode sync_mode_from_string(const std::string& name) {
    for (auto m : {SyncMode::None, SyncMode::ServerOnly, SyncMode::Ajive})
        if (name == to_string(m)) return m;
    fail(ErrorKind::InvalidInput, "unknown sync mode '" + name + "'");
}

bool is_lora(OptimizerKind kind) { return kind == OptimizerKind::LoraAdamW || kind == OptimizerKind::LoraSgd; }

void FedConfig::validate() const {
    require(num_clients >= 1, ErrorKind::InvalidInput, "fed: num_clients must be positive");
    require(participants >= 1 && participants <= num_clients, ErrorKind::InvalidInput,
            "fed: participants must lie in [1, num_clients]");
    require(local_steps >= 1, ErrorKind::InvalidInput, "fed: local_steps must be positive");
    require(rounds >= 1, ErrorKind::InvalidInput, "fed: rounds must be positive");
    require(rank >= 1, ErrorKind::InvalidInput, "fed: rank must be positive");
    require(lr > 0.0 && std::isfinite(lr), ErrorKind::InvalidInput, "fed: lr must be positive");
    require(momentum >= 0.0 && momentum < 1.0, ErrorKind::InvalidInput, "fed: momentum must lie in [0, 1)");
    require(galore_refresh >= 1 && galore_adaptive_refreshes >= 0, ErrorKind::InvalidInput,
            "fed: galore refresh settings out of range");
    require(!sync_joint_rank || *sync_joint_rank >= 1, ErrorKind::InvalidInput, "fed: sync_joint_rank must be positive");
    adam.validate();
    if (!client_weights.empty()) adapters::check_weights(client_weights, static_cast<std::size_t>(num_clients));
    if (is_lora(optimizer)) {
        require(aggregation != AggregationKind::FedAvgDense, ErrorKind::InvalidInput,
                "fed: lora optimizers aggregate with factor_product, frozen_a or lifted");
    } else {
        require(aggregation == AggregationKind::FedAvgDense, ErrorKind::InvalidInput,
                "fed: dense optimizers aggregate with fedavg_dense");
    }
    require(sync == SyncMode::None || optimizer == OptimizerKind::GaloreAdamW, ErrorKind::InvalidInput,
            "fed: state sync requires galore_adamw");
}

std::vector<double> FedConfig::weights() const {
    if (!client_weights.empty()) return client_weights;
    return std::vector<double>(static_cast<std::size_t>(num_clients), 1.0 / static_cast<double>(num_clients));
}

Federation quad_federation(const tasks::QuadEnsemble& ens) {
    auto shared = std::make_shared<const tasks::QuadEnsemble>(ens);
    Federation fed;
    for (std::size_t i = 0; i < shared->size(); ++i) {
        ClientTask task;
        task.loss = [shared, i](const Matrix& w) { return shared->client_loss(w, i); };
        task.grad = [shared, i](const Matrix& w, Rng& rng) {
            Matrix g = shared->client_grad(w, i);
            if (shared->noise_std > 0.0) g += shared->noise_std * rng.gaussian_matrix(w.rows(), w.cols());
            return optim::clip_by_norm(g, shared->clip);
        };
        fed.clients.push_back(std::move(task));
    }
    fed.global_loss = [shared](const Matrix& w) { return shared->global_loss(w); };
    return fed;
}

Matrix ClientUpdate::delta() const {
    if (dense) return *dense;
    require(factors.has_value(), ErrorKind::InvalidState, "client update carries no delta");
    return factors->reconstruct();
}

Index ClientUpdate::payload_floats() const {
    Index n = 0;
    if (dense) n += dense->size();
    if (factors) {
        const bool left_seeded = factors->basis_seed && factors->seeded_side == optim::Side::Left;
        const bool right_seeded = factors->basis_seed && factors->seeded_side == optim::Side::Right;
        if (!left_seeded) n += factors->left.size();
        if (!right_seeded) n += factors->right.size();
    }
    if (v_proj) n += v_proj->size();
    return n;
}

Index ClientUpdate::payload_seeds() const {
    // One basis index covers both the seeded delta factor and v_proj.
    return (v_proj || (factors && factors->basis_seed)) ? 1 : 0;
}

GlobalState GlobalState::initial(Matrix theta0, const FedConfig& cfg) {
    GlobalState gs;
    gs.theta_bar = std::move(theta0);
    gs.seed = derive_seed(cfg.master_seed, kSync);
    return gs;
}

ClientState init_client_state(const GlobalState& gs, const FedConfig& cfg) {
    const Index rows = gs.theta_bar.rows();
    const Index cols = gs.theta_bar.cols();
    ClientState s;
    switch (cfg.optimizer) {
        case OptimizerKind::Sgd:
            break;
        case OptimizerKind::Momentum:
            s.momentum = optim::MomentumState::zeros(rows, cols);
            break;
        case OptimizerKind::AdamW:
            s.adam = optim::DenseAdamState::zeros(rows, cols);
            break;
        case OptimizerKind::GaloreAdamW: {
            require(cfg.rank <= std::min(rows, cols), ErrorKind::InvalidInput, "fed: rank exceeds block dimensions");
            if (gs.v_bar) {
                s.galore = optim::GaLoreState::fresh(rows, cols, galore_config(cfg, gs.seed + 1, 0));
                optim::Projector p = optim::make_projector(gs.theta_bar, cfg.rank, optim::ProjectorMode::seeded(gs.seed));
                s.galore.v = optim::project(*gs.v_bar, p).cwiseMax(0.0);
                s.galore.projector = std::move(p);
            } else {
                s.galore = optim::GaLoreState::fresh(rows, cols, galore_config(cfg, gs.seed, cfg.galore_adaptive_refreshes));
            }
            break;
        }
        case OptimizerKind::LoraAdamW:
        case OptimizerKind::LoraSgd:
            require(cfg.rank <= std::min(rows, cols), ErrorKind::InvalidInput, "fed: rank exceeds block dimensions");
            s.lora_a = lora_a_for_round(gs, cfg, cols);
            s.lora_b = Matrix::Zero(rows, cfg.rank);
            s.adam_a = optim::DenseAdamState::zeros(cfg.rank, cols);
            s.adam_b = optim::DenseAdamState::zeros(rows, cfg.rank);
            break;
    }
    return s;
}

LocalResult local_train(const Matrix& theta0, const ClientState& init, const ClientTask& task, const FedConfig& cfg,
                        Rng& batch_rng) {
    require(cfg.local_steps >= 1, ErrorKind::InvalidInput, "local_train: T must be positive");
    LocalResult out;
    out.state = init;
    out.trajectory.reserve(static_cast<std::size_t>(cfg.local_steps) + 1);
    out.trajectory.push_back(theta0);
    Matrix theta = theta0;
    ClientState& s = out.state;
    const bool lora = is_lora(cfg.optimizer);
    const bool train_a = cfg.aggregation != AggregationKind::FrozenA;
    for (Index t = 0; t < cfg.local_steps; ++t) {
        const Matrix w = lora ? Matrix(theta0 + cfg.lora_scaling * s.lora_b * s.lora_a) : theta;
        const Matrix g = task.grad(w, batch_rng);
        require_finite(g, t, "gradient");
        switch (cfg.optimizer) {
            case OptimizerKind::Sgd:
                theta = optim::sgd_step(theta, g, cfg.lr);
                break;
            case OptimizerKind::Momentum: {
                auto step = optim::momentum_step(theta, s.momentum, g, cfg.lr, cfg.momentum);
                theta = std::move(step.theta);
                s.momentum = std::move(step.state);
                break;
            }
            case OptimizerKind::AdamW: {
                auto step = optim::adamw_step(theta, s.adam, g, cfg.adam);
                theta = std::move(step.theta);
                s.adam = std::move(step.state);
                break;
            }
            case OptimizerKind::GaloreAdamW: {
                auto step = optim::galore_adamw_step(theta, s.galore, g, cfg.adam);
                theta = std::move(step.theta);
                s.galore = std::move(step.state);
                break;
            }
            case OptimizerKind::LoraAdamW:
            case OptimizerKind::LoraSgd: {
                const Matrix gb = cfg.lora_scaling * g * s.lora_a.transpose();
                const Matrix ga = cfg.lora_scaling * s.lora_b.transpose() * g;
                if (cfg.optimizer == OptimizerKind::LoraSgd) {
                    s.lora_b = optim::sgd_step(s.lora_b, gb, cfg.lr);
                    if (train_a) s.lora_a = optim::sgd_step(s.lora_a, ga, cfg.lr);
                } else {
                    auto sb = optim::adamw_step(s.lora_b, s.adam_b, gb, cfg.adam);
                    s.lora_b = std::move(sb.theta);
                    s.adam_b = std::move(sb.state);
                    if (train_a) {
                        auto sa = optim::adamw_step(s.lora_a, s.adam_a, ga, cfg.adam);
                        s.lora_a = std::move(sa.theta);
                        s.adam_a = std::move(sa.state);
                    }
                }
                theta = theta0 + cfg.lora_scaling * s.lora_b * s.lora_a;
                break;
            }
        }
        require_finite(theta, t, "iterate");
        out.trajectory.push_back(theta);
    }
    out.theta = std::move(theta);
    return out;
}

ClientUpdate make_update(std::size_t client_id, const Matrix& theta0, const LocalResult& local, const GlobalState& gs,
                         const FedConfig& cfg, double terminal_loss) {
    ClientUpdate u;
    u.client_id = client_id;
    u.terminal_loss = terminal_loss;
    const ClientState& s = local.state;
    switch (cfg.optimizer) {
        case OptimizerKind::Sgd:
        case OptimizerKind::Momentum:
        case OptimizerKind::AdamW:
            u.dense = local.theta - theta0;
            break;
        case OptimizerKind::LoraAdamW:
        case OptimizerKind::LoraSgd: {
            FactorizedDelta f;
            f.left = cfg.lora_scaling * s.lora_b;
            f.right = s.lora_a;
            u.factors = std::move(f);
            break;
        }
        case OptimizerKind::GaloreAdamW: {
            const optim::GaLoreState& g = s.galore;
            require(g.projector.has_value(), ErrorKind::InvalidState, "make_update: galore state has no projector");
            const optim::Projector& p = *g.projector;
            u.side = g.side;
            const Matrix delta = local.theta - theta0;
            FactorizedDelta f;
            if (p.is_seeded() && p.refresh_count == 0 && cfg.adam.weight_decay == 0.0) {
                // The whole round moved inside one seeded subspace.
                f.basis_seed = p.seed;
                f.seeded_side = g.side;
                if (g.side == optim::Side::Right) {
                    f.left = optim::project(delta, p);
                    f.right = p.basis;
                } else {
                    f.left = p.basis;
                    f.right = optim::project(delta, p);
                }
            } else {
                const linalg::SvdFactors sv = linalg::svd(delta, std::min(cfg.rank, std::min(delta.rows(), delta.cols())));
                f.left = sv.u * sv.s.asDiagonal();
                f.right = sv.v.transpose();
            }
            u.factors = std::move(f);
            if (cfg.sync != SyncMode::None) {
                if (p.is_seeded()) {
                    u.v_proj = g.v;
                    u.basis_seed = p.seed;
                } else {
                    const optim::Projector target =
                        optim::make_projector(theta0, cfg.rank, optim::ProjectorMode::seeded(gs.seed));
                    u.v_proj = optim::reproject_buffers(g.m, g.v, p, target, optim::SecondMomentPolicy::Clamp).second;
                    u.basis_seed = gs.seed;
                }
            }
            break;
        }
    }
    return u;
}

std::vector<double> participant_weights(const std::vector<double>& weights, const std::vector<std::size_t>& ids) {
    require(!ids.empty(), ErrorKind::InvalidInput, "participant_weights: empty participant set");
    std::vector<double> sub;
    sub.reserve(ids.size());
    for (std::size_t id : ids) {
        require(id < weights.size(), ErrorKind::InvalidInput, "participant_weights: client index out of range");
        sub.push_back(weights[id]);
    }
    return adapters::renormalize(sub);
}

Matrix server_aggregate(const Matrix& theta_bar, const std::vector<ClientUpdate>& updates,
                        const std::vector<double>& weights, AggregationKind mode) {
    require(!updates.empty(), ErrorKind::InvalidInput, "server_aggregate: empty participant set");
    adapters::check_weights(weights, updates.size());
    if (mode == AggregationKind::FedAvgDense) {
        Matrix delta = Matrix::Zero(theta_bar.rows(), theta_bar.cols());
        for (std::size_t i = 0; i < updates.size(); ++i) delta += weights[i] * updates[i].delta();
        return theta_bar + delta;
    }
    std::vector<adapters::FactorPair> pairs;
    pairs.reserve(updates.size());
    for (const auto& u : updates) {
        require(u.factors.has_value(), ErrorKind::ProtocolViolation, "server_aggregate: adapter mode needs factorized deltas");
        pairs.push_back({u.factors->left, u.factors->right});
    }
    switch (mode) {
        case AggregationKind::FactorProduct:
            return theta_bar + adapters::aggregate_factor_product(pairs, weights).delta;
        case AggregationKind::Lifted:
            return theta_bar + adapters::aggregate_lifted(pairs, weights).delta;
        case AggregationKind::FrozenA: {
            std::vector<Matrix> bs;
            for (const auto& pr : pairs) {
                require(pr.a == pairs.front().a, ErrorKind::ProtocolViolation, "server_aggregate: frozen_a needs a shared A");
                bs.push_back(pr.b);
            }
            return theta_bar + adapters::aggregate_frozen_a(bs, pairs.front().a, weights).delta;
        }
        case AggregationKind::FedAvgDense:
            break;
    }
    return theta_bar;
}

Matrix build_matrix_view(const Matrix& v_proj, std::uint64_t basis_seed, Index n, Index r) {
    require(v_proj.cols() == r, ErrorKind::InvalidInput, "build_matrix_view: v_proj must have r columns");
    return build_matrix_view(v_proj, basis_seed, v_proj.rows(), n, r, optim::Side::Right);
}

Matrix build_matrix_view(const Matrix& v_proj, std::uint64_t basis_seed, Index rows, Index cols, Index r,
                         optim::Side side) {
    require(r >= 1, ErrorKind::InvalidInput, "build_matrix_view: rank must be positive");
    if (side == optim::Side::Right) {
        require(v_proj.rows() == rows && v_proj.cols() == r, ErrorKind::InvalidInput,
                "build_matrix_view: v_proj must be rows x r");
        return v_proj * linalg::seeded_orthonormal(basis_seed, cols, r);
    }
    require(v_proj.rows() == r && v_proj.cols() == cols, ErrorKind::InvalidInput,
            "build_matrix_view: v_proj must be r x cols");
    return linalg::seeded_orthonormal(basis_seed, rows, r).transpose() * v_proj;
}

GlobalState state_sync(const std::vector<ClientUpdate>& updates, const std::vector<double>& weights,
                       const GlobalState& gs, Matrix theta_next, const FedConfig& cfg) {
    GlobalState next;
    next.theta_bar = std::move(theta_next);
    next.round = gs.round + 1;
    next.seed = gs.seed + 1;
    if (cfg.sync == SyncMode::None) return next;

    require(!updates.empty(), ErrorKind::InvalidInput, "state_sync: no updates");
    const Index rows = next.theta_bar.rows();
    const Index cols = next.theta_bar.cols();
    std::vector<Matrix> views;
    views.reserve(updates.size());
    for (const auto& u : updates) {
        require(u.v_proj.has_value(), ErrorKind::ProtocolViolation,
                "state_sync: client " + std::to_string(u.client_id) + " sent no projected second moment");
        views.push_back(build_matrix_view(*u.v_proj, u.basis_seed, rows, cols, cfg.rank, u.side));
    }
    Matrix v_bar;
    if (cfg.sync == SyncMode::ServerOnly) {
        v_bar = Matrix::Zero(rows, cols);
        for (std::size_t i = 0; i < views.size(); ++i) v_bar += weights[i] * views[i];
    } else {
        ajive::SyncOptions opts;
        opts.seed = derive_seed(cfg.master_seed, kSync, static_cast<std::uint64_t>(gs.round));
        opts.allow_signed_views = true;
        v_bar = ajive::sync_second_moments(views, cfg.sync_joint_rank.value_or(cfg.rank), weights, opts);
    }
    next.v_bar = v_bar.cwiseMax(0.0);
    return next;
}

std::vector<std::size_t> sample_participants(Index num_clients, Index participants, std::uint64_t round_seed) {
    require(participants >= 1 && participants <= num_clients, ErrorKind::InvalidInput,
            "sample_participants: need 1 <= K <= M");
    Rng rng(round_seed);
    return sample_without_replacement(static_cast<std::size_t>(num_clients), static_cast<std::size_t>(participants), rng);
}

RoundResult run_round(const GlobalState& gs, const Federation& fed, const FedConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    cfg.validate();
    require(static_cast<Index>(fed.clients.size()) == cfg.num_clients, ErrorKind::InvalidInput,
            "run_round: federation size does not match num_clients");
    const std::uint64_t round = static_cast<std::uint64_t>(gs.round);
    const auto ids = sample_participants(cfg.num_clients, cfg.participants, derive_seed(cfg.master_seed, kParticipation, round));

    struct Slot {
        std::optional<LocalResult> local;
        std::optional<ClientUpdate> update;
        bool diverged = false;
    };
    std::vector<Slot> slots(ids.size());
    const ClientState init = init_client_state(gs, cfg);
    parallel_for(ids.size(), [&](std::size_t j) {
        const std::size_t id = ids[j];
        Rng batch(derive_seed(cfg.master_seed, kBatch, round * static_cast<std::uint64_t>(cfg.num_clients) + id));
        try {
            LocalResult local = local_train(gs.theta_bar, init, fed.clients[id], cfg, batch);
            const double loss = fed.clients[id].loss(local.theta);
            if (!std::isfinite(loss)) fail(ErrorKind::Diverged, "local_train: non-finite terminal loss");
            slots[j].update = make_update(id, gs.theta_bar, local, gs, cfg, loss);
            slots[j].local = std::move(local);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::Diverged) throw;
            slots[j].diverged = true;
        }
    });

    RoundResult out;
    RoundMetrics& m = out.metrics;
    m.round = gs.round;
    m.sync_mode = cfg.sync;
    m.participants = static_cast<Index>(ids.size());
    std::vector<ClientUpdate> updates;
    std::vector<const LocalResult*> locals;
    for (std::size_t j = 0; j < ids.size(); ++j) {
        if (slots[j].diverged) {
            ++m.diverged;
            continue;
        }
        out.survivors.push_back(ids[j]);
        out.client_losses.push_back(slots[j].update->terminal_loss);
        m.uplink_floats += slots[j].update->payload_floats();
        m.uplink_seeds += slots[j].update->payload_seeds();
        updates.push_back(std::move(*slots[j].update));
        locals.push_back(&*slots[j].local);
    }

    if (updates.empty()) {
        m.failed = true;
        m.global_loss = fed.global_loss(gs.theta_bar);
        m.mean_client_loss = std::numeric_limits<double>::quiet_NaN();
        m.aggregate_tail = std::numeric_limits<double>::quiet_NaN();
        m.max_local_deviation = std::numeric_limits<double>::quiet_NaN();
        out.state = gs;
        m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        return out;
    }

    const std::vector<double> weights = participant_weights(cfg.weights(), out.survivors);
    Matrix theta_next = server_aggregate(gs.theta_bar, updates, weights, cfg.aggregation);
    m.aggregate_tail = linalg::tail_distance(theta_next - gs.theta_bar, cfg.rank);

    for (std::size_t t = 0; t < locals.front()->trajectory.size(); ++t) {
        Matrix mean = Matrix::Zero(gs.theta_bar.rows(), gs.theta_bar.cols());
        for (std::size_t j = 0; j < locals.size(); ++j) mean += weights[j] * locals[j]->trajectory[t];
        for (const LocalResult* l : locals) m.max_local_deviation = std::max(m.max_local_deviation, (l->trajectory[t] - mean).norm());
    }
    m.mean_client_loss = std::accumulate(out.client_losses.begin(), out.client_losses.end(), 0.0) /
                         static_cast<double>(out.client_losses.size());

    out.state = state_sync(updates, weights, gs, std::move(theta_next), cfg);
    m.global_loss = fed.global_loss(out.state.theta_bar);
    m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return out;
}

RunResult run_federation(const Matrix& theta0, const Federation& fed, const FedConfig& cfg) {
    cfg.validate();
    RunResult run;
    run.state = GlobalState::initial(theta0, cfg);
    for (Index k = 0; k < cfg.rounds; ++k) {
        RoundResult r = run_round(run.state, fed, cfg);
        run.state = std::move(r.state);
        run.rounds.push_back(r.metrics);
        if (r.metrics.failed) break;
    }
    return run;
}

double barrier(const Matrix& a, const Matrix& b, const std::function<double(const Matrix&)>& loss, Index grid) {
    require(grid >= 3, ErrorKind::InvalidInput, "barrier: grid must have at least 3 points");
    require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::InvalidInput, "barrier: shape mismatch");
    const double fa = loss(a);
    const double fb = loss(b);
    double worst = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < grid; ++j) {
        const double lambda = static_cast<double>(j) / static_cast<double>(grid - 1);
        const double gap = loss(lambda * a + (1.0 - lambda) * b) - (lambda * fa + (1.0 - lambda) * fb);
        worst = std::max(worst, gap);
    }
    return worst;
}

}  // namespace fedlr::fedsim
