// Copyright (C) 2026 The fedlr Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "fedlr/ajive.hpp"
#include "fedlr/error.hpp"
#include "fedlr/fedsim.hpp"
#include "fedlr/parallel.hpp"
#include "fedlr/random.hpp"
#include "fedlr/tasks.hpp"
#include "fedlr/theory.hpp"

namespace fedlr::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

// Seed streams of the runner; library components derive their own below these.
enum Stream : std::uint64_t {
    kEnsemble = 101,
    kInit = 102,
    kAjiveData = 103,
    kAjiveSync = 104,
    kEnvelope = 105,
    kContainment = 106,
    kBiasSweep = 107,
    kCorollary = 108,
    kPartition = 109,
};

// ---------------------------------------------------------------------------
// Schema binding

enum class Kind { Count, Seed, Real, Flag, Text, Reals, Counts, Texts, OptCount, OptReal, Object };

const char* expected(Kind k) {
    switch (k) {
        case Kind::Count: return "non-negative integer";
        case Kind::Seed: return "non-negative integer";
        case Kind::Real: return "number";
        case Kind::Flag: return "boolean";
        case Kind::Text: return "string";
        case Kind::Reals: return "array of numbers";
        case Kind::Counts: return "array of non-negative integers";
        case Kind::Texts: return "array of strings";
        case Kind::OptCount: return "non-negative integer or null";
        case Kind::OptReal: return "number or null";
        case Kind::Object: return "object";
    }
    return "value";
}

bool is_count(const json& j) {
    return j.is_number_unsigned() || (j.is_number_integer() && j.get<std::int64_t>() >= 0);
}

bool matches(Kind k, const json& j) {
    const auto all = [&j](auto pred) {
        return j.is_array() && std::all_of(j.begin(), j.end(), pred);
    };
    switch (k) {
        case Kind::Count:
        case Kind::Seed: return is_count(j);
        case Kind::Real: return j.is_number();
        case Kind::Flag: return j.is_boolean();
        case Kind::Text: return j.is_string();
        case Kind::Reals: return all([](const json& e) { return e.is_number(); });
        case Kind::Counts: return all([](const json& e) { return is_count(e); });
        case Kind::Texts: return all([](const json& e) { return e.is_string(); });
        case Kind::OptCount: return j.is_null() || is_count(j);
        case Kind::OptReal: return j.is_null() || j.is_number();
        case Kind::Object: return j.is_object();
    }
    return false;
}

struct Field {
    std::string key;
    Kind kind;
    std::function<void(const json&)> set;
    std::function<json()> get;
    std::vector<Field> children;  // Kind::Object only
};

template <class I>
Field count(std::string key, I& x) {
    return {std::move(key), Kind::Count, [&x](const json& j) { x = j.get<I>(); }, [&x] { return json(x); }, {}};
}

Field seed(std::string key, std::uint64_t& x) {
    return {std::move(key), Kind::Seed, [&x](const json& j) { x = j.get<std::uint64_t>(); }, [&x] { return json(x); },
            {}};
}

Field real(std::string key, double& x) {
    return {std::move(key), Kind::Real, [&x](const json& j) { x = j.get<double>(); }, [&x] { return json(x); }, {}};
}

Field flag(std::string key, bool& x) {
    return {std::move(key), Kind::Flag, [&x](const json& j) { x = j.get<bool>(); }, [&x] { return json(x); }, {}};
}

Field reals(std::string key, std::vector<double>& x) {
    return {std::move(key), Kind::Reals, [&x](const json& j) { x = j.get<std::vector<double>>(); },
            [&x] { return json(x); }, {}};
}

Field counts(std::string key, std::vector<Index>& x) {
    return {std::move(key), Kind::Counts, [&x](const json& j) { x = j.get<std::vector<Index>>(); },
            [&x] { return json(x); }, {}};
}

Field texts(std::string key, std::vector<std::string>& x) {
    return {std::move(key), Kind::Texts, [&x](const json& j) { x = j.get<std::vector<std::string>>(); },
            [&x] { return json(x); }, {}};
}

template <class T>
Field optional_value(std::string key, Kind kind, std::optional<T>& x) {
    return {std::move(key), kind,
            [&x](const json& j) {
                if (j.is_null())
                    x.reset();
                else
                    x = j.get<T>();
            },
            [&x] { return x ? json(*x) : json(nullptr); }, {}};
}

template <class E>
Field choice(std::string key, E& x, E (*parse)(const std::string&), const char* (*name)(E)) {
    return {std::move(key), Kind::Text, [&x, parse](const json& j) { x = parse(j.get<std::string>()); },
            [&x, name] { return json(name(x)); }, {}};
}

Field object(std::string key, std::vector<Field> children) {
    return {std::move(key), Kind::Object, nullptr, nullptr, std::move(children)};
}

using Diagnostics = std::vector<Diagnostic>;

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

void bind_fields(const json& obj, const std::string& path, const std::vector<Field>& fields, Diagnostics& diags) {
    for (const auto& [key, value] : obj.items()) {
        const std::string where = join(path, key);
        const auto it = std::find_if(fields.begin(), fields.end(), [&](const Field& f) { return f.key == key; });
        if (it == fields.end()) {
            diags.push_back({where, "unknown key"});
            continue;
        }
        if (!matches(it->kind, value)) {
            diags.push_back({where, std::string("expected ") + expected(it->kind)});
            continue;
        }
        if (it->kind == Kind::Object) {
            bind_fields(value, where, it->children, diags);
            continue;
        }
        try {
            it->set(value);
        } catch (const Error& e) {
            diags.push_back({where, e.what()});
        } catch (const json::exception& e) {
            diags.push_back({where, std::string("expected ") + expected(it->kind)});
        }
    }
}

json echo(const std::vector<Field>& fields) {
    json out = json::object();
    for (const auto& f : fields) out[f.key] = f.kind == Kind::Object ? echo(f.children) : f.get();
    return out;
}

bool has_key(const json& doc, const std::string& section, const std::string& key) {
    return doc.contains(section) && doc.at(section).is_object() && doc.at(section).contains(key);
}

/// Runs a struct's own range check and records its message under path.
void check(const std::string& path, const std::function<void()>& fn, Diagnostics& diags) {
    try {
        fn();
    } catch (const Error& e) {
        diags.push_back({path, e.what()});
    }
}

// ---------------------------------------------------------------------------
// Resolved run document

constexpr const char* kExperiments[] = {"federated", "landscape", "ajive_validate", "theory_check", "partition_stats"};

struct ChecksConfig {
    std::vector<std::string> optimizers{"sgd", "momentum", "adamw"};
    Index runs = 1000;
    Index envelope_trials = 2000;
    Index corollary_runs = 500;
    std::optional<double> corollary_lr;  // defaults to 1 / (6 L T)
    std::vector<double> bias_v_sweep;
};

struct PartitionConfig {
    double alpha = 0.5;
    Index clients = 50;
    Index samples = 5000;
    Index classes = 10;
    double threshold = 0.01;
    Index trials = 10;
};

struct Resolved {
    std::string experiment;
    std::uint64_t master_seed = 0;
    bool fixtures = false;

    fedsim::FedConfig fed;
    double init_std = 0.0;
    tasks::QuadEnsembleConfig ensemble;
    std::uint64_t ensemble_seed = 0;

    tasks::LandscapeConfig landscape;
    tasks::TrapOptimizer trap;
    Index trap_trials = 200;
    std::vector<std::string> methods{"full_sgd", "lora", "galore"};

    tasks::AjiveValidationConfig ajive_data;
    std::vector<Index> client_counts{5, 10, 20, 30};
    Index ajive_seeds = 10;
    Index joint_rank = 15;

    theory::WhpParams whp;
    ChecksConfig checks;

    PartitionConfig partition;

    json config;  // resolved echo
};

std::vector<Field> ensemble_fields(Resolved& r) {
    auto& e = r.ensemble;
    return {count("clients", e.clients),
            count("rows", e.rows),
            count("cols", e.cols),
            real("curvature_min", e.curvature_min),
            real("curvature_max", e.curvature_max),
            real("center_spread", e.center_spread),
            real("center_offset", e.center_offset),
            real("noise_std", e.noise_std),
            real("clip", e.clip),
            flag("dirichlet_weights", e.dirichlet_weights),
            real("weight_alpha", e.weight_alpha),
            seed("seed", r.ensemble_seed)};
}

std::vector<Field> section_fields(Resolved& r) {
    std::vector<Field> out;
    if (r.experiment == "federated") {
        auto& f = r.fed;
        out.push_back(object("federated",
                             {count("num_clients", f.num_clients),
                              count("participants", f.participants),
                              count("local_steps", f.local_steps),
                              count("rounds", f.rounds),
                              reals("client_weights", f.client_weights),
                              choice("optimizer", f.optimizer, &fedsim::optimizer_from_string, &fedsim::to_string),
                              choice("aggregation", f.aggregation, &fedsim::aggregation_from_string, &fedsim::to_string),
                              choice("sync", f.sync, &fedsim::sync_mode_from_string, &fedsim::to_string),
                              count("rank", f.rank),
                              object("adam", {real("lr", f.adam.lr), real("beta1", f.adam.beta1),
                                              real("beta2", f.adam.beta2), real("eps", f.adam.eps),
                                              real("weight_decay", f.adam.weight_decay),
                                              flag("bias_correction", f.adam.bias_correction)}),
                              real("lr", f.lr),
                              real("momentum", f.momentum),
                              count("galore_refresh", f.galore_refresh),
                              count("galore_adaptive_refreshes", f.galore_adaptive_refreshes),
                              real("lora_scaling", f.lora_scaling),
                              optional_value("sync_joint_rank", Kind::OptCount, f.sync_joint_rank),
                              real("init_std", r.init_std)}));
        out.push_back(object("ensemble", ensemble_fields(r)));
    } else if (r.experiment == "landscape") {
        auto& l = r.landscape;
        auto& t = r.trap;
        out.push_back(object("landscape", {count("dim", l.dim), count("lora_rank", l.lora_rank),
                                           real("separation", l.separation), real("flat_curvature", l.flat_curvature),
                                           real("sharp_curvature", l.sharp_curvature),
                                           real("valley_curvature", l.valley_curvature), real("tau", l.tau),
                                           real("noise_std", l.noise_std), real("lora_init_std", l.lora_init_std),
                                           seed("geometry_seed", l.geometry_seed)}));
        out.push_back(object("trap", {real("lr", t.lr), count("steps", t.steps), real("init_noise", t.init_noise),
                                      real("ref_aligned", t.ref_aligned), real("ref_orthogonal", t.ref_orthogonal),
                                      count("galore_refresh", t.galore_refresh), count("galore_rank", t.galore_rank),
                                      real("divergence_norm", t.divergence_norm), count("trials", r.trap_trials),
                                      texts("methods", r.methods)}));
    } else if (r.experiment == "ajive_validate") {
        auto& a = r.ajive_data;
        out.push_back(object("ajive_validation",
                             {count("rows", a.rows), count("cols", a.cols), count("signal_rank", a.signal_rank),
                              count("drift_rank", a.drift_rank), real("drift", a.drift), real("sigma", a.sigma),
                              counts("client_counts", r.client_counts), count("seeds", r.ajive_seeds),
                              count("joint_rank", r.joint_rank)}));
    } else if (r.experiment == "theory_check") {
        auto& p = r.whp;
        auto& c = r.checks;
        out.push_back(object("ensemble", ensemble_fields(r)));
        out.push_back(object("whp", {real("sigma", p.sigma), count("rounds", p.rounds), count("steps", p.steps),
                                     real("delta", p.delta), real("grad_bound", p.grad_bound),
                                     real("bias_m", p.bias_m), real("bias_v", p.bias_v), real("lr", p.lr),
                                     real("beta1", p.beta1), real("beta2", p.beta2), real("eps", p.eps)}));
        out.push_back(object("checks", {texts("optimizers", c.optimizers), count("runs", c.runs),
                                        count("envelope_trials", c.envelope_trials),
                                        count("corollary_runs", c.corollary_runs),
                                        optional_value("corollary_lr", Kind::OptReal, c.corollary_lr),
                                        reals("bias_v_sweep", c.bias_v_sweep)}));
    } else if (r.experiment == "partition_stats") {
        auto& d = r.partition;
        out.push_back(object("dirichlet", {real("alpha", d.alpha), count("clients", d.clients),
                                           count("samples", d.samples), count("classes", d.classes),
                                           real("threshold", d.threshold), count("trials", d.trials)}));
    }
    return out;
}

/// Replaces the experiment's trial count with --trials.
void apply_trials(json& doc, const std::string& experiment, Index trials, Diagnostics& diags) {
    const auto put = [&](const char* section, const char* key) {
        if (!doc.contains(section) || !doc[section].is_object()) doc[section] = json::object();
        doc[section][key] = trials;
    };
    if (experiment == "landscape")
        put("trap", "trials");
    else if (experiment == "ajive_validate")
        put("ajive_validation", "seeds");
    else if (experiment == "theory_check")
        put("checks", "runs");
    else if (experiment == "partition_stats")
        put("dirichlet", "trials");
    else
        diags.push_back({"--trials", "not used by experiment " + experiment});
}

void check_federated(const json& doc, Resolved& r, Diagnostics& diags) {
    auto& f = r.fed;
    if (!has_key(doc, "ensemble", "clients")) {
        r.ensemble.clients = f.num_clients;
    } else if (r.ensemble.clients != f.num_clients) {
        diags.push_back({"ensemble.clients", "must equal federated.num_clients"});
    }
    if (!has_key(doc, "ensemble", "seed")) r.ensemble_seed = derive_seed(r.master_seed, kEnsemble);
    if (f.participants > f.num_clients) diags.push_back({"federated.participants", "participants exceed clients"});
    if (!(r.init_std >= 0.0)) diags.push_back({"federated.init_std", "must be nonnegative"});
    if (!diags.empty()) return;
    f.master_seed = r.master_seed;
    check("federated", [&] { f.validate(); }, diags);
    check("ensemble", [&] { r.ensemble.validate(); }, diags);
}

void check_landscape(Resolved& r, Diagnostics& diags) {
    for (std::size_t i = 0; i < r.methods.size(); ++i)
        check("trap.methods." + std::to_string(i), [&] { tasks::trap_method_from_string(r.methods[i]); }, diags);
    if (r.trap_trials < 1) diags.push_back({"trap.trials", "must be at least 1"});
    check("trap", [&] { r.trap.validate(); }, diags);
    if (diags.empty()) check("landscape", [&] { tasks::SoftminLandscape::build(r.landscape); }, diags);
}

void check_ajive(Resolved& r, Diagnostics& diags) {
    if (r.client_counts.empty()) diags.push_back({"ajive_validation.client_counts", "must not be empty"});
    for (const Index k : r.client_counts)
        if (k < 2) diags.push_back({"ajive_validation.client_counts", "every count must be at least 2"});
    if (r.ajive_seeds < 1) diags.push_back({"ajive_validation.seeds", "must be at least 1"});
    const auto& a = r.ajive_data;
    if (r.joint_rank < 1 || r.joint_rank >= std::min(a.rows, a.cols))
        diags.push_back({"ajive_validation.joint_rank", "must lie in [1, min(rows, cols))"});
    check("ajive_validation", [&] { a.validate(); }, diags);
}

void check_theory(const json& doc, Resolved& r, Diagnostics& diags) {
    if (!has_key(doc, "ensemble", "seed")) r.ensemble_seed = derive_seed(r.master_seed, kEnsemble);
    for (std::size_t i = 0; i < r.checks.optimizers.size(); ++i)
        check("checks.optimizers." + std::to_string(i),
              [&] { theory::whp_optimizer_from_string(r.checks.optimizers[i]); }, diags);
    if (r.checks.runs < 1) diags.push_back({"checks.runs", "must be at least 1"});
    if (r.checks.envelope_trials < 1) diags.push_back({"checks.envelope_trials", "must be at least 1"});
    if (r.checks.corollary_runs < 1) diags.push_back({"checks.corollary_runs", "must be at least 1"});
    for (const double b : r.checks.bias_v_sweep)
        if (!(b >= 0.0)) diags.push_back({"checks.bias_v_sweep", "entries must be nonnegative"});
    check("ensemble", [&] { r.ensemble.validate(); }, diags);
    if (!diags.empty()) return;

    // L, d and M come from the generated ensemble.
    const auto ens = tasks::QuadEnsemble::generate(r.ensemble, r.ensemble_seed);
    const auto base = theory::whp_params_for(ens);
    r.whp.dim = base.dim;
    r.whp.clients = base.clients;
    r.whp.smoothness = base.smoothness;
    check("whp", [&] { r.whp.validate(); }, diags);
    if (!diags.empty()) return;
    const double lt = r.whp.smoothness * static_cast<double>(r.whp.steps);
    for (const auto& name : r.checks.optimizers) {
        if (name != "adamw" && r.whp.lr * lt > 0.5) {
            diags.push_back({"whp.lr", "step-size condition lr * L * steps <= 1/2 fails for " + name + " (L = " +
                                           format_real(r.whp.smoothness) + ")"});
            break;
        }
    }
    if (!r.checks.corollary_lr) r.checks.corollary_lr = 1.0 / (6.0 * lt);
    if (!(*r.checks.corollary_lr > 0.0) || *r.checks.corollary_lr * lt > 1.0 / 6.0 * (1.0 + 1e-12))
        diags.push_back({"checks.corollary_lr", "needs 0 < corollary_lr * L * steps <= 1/6"});
}

void check_partition(Resolved& r, Diagnostics& diags) {
    const auto& d = r.partition;
    if (!(d.alpha > 0.0)) diags.push_back({"dirichlet.alpha", "must be positive"});
    if (d.clients < 1) diags.push_back({"dirichlet.clients", "must be at least 1"});
    if (d.classes < 1) diags.push_back({"dirichlet.classes", "must be at least 1"});
    if (d.samples < d.clients) diags.push_back({"dirichlet.samples", "fewer samples than clients"});
    if (d.trials < 1) diags.push_back({"dirichlet.trials", "must be at least 1"});
    if (!(d.threshold >= 0.0 && d.threshold < 1.0)) diags.push_back({"dirichlet.threshold", "must lie in [0, 1)"});
}

/// Binds and checks the document. Diagnostics are empty when r is runnable.
Diagnostics resolve(const json& doc_in, const RunOptions* options, Resolved& r) {
    Diagnostics diags;
    if (!doc_in.is_object()) return {{"", "expected a JSON object"}};
    if (!doc_in.contains("experiment")) return {{"experiment", "required"}};
    if (!doc_in.at("experiment").is_string()) return {{"experiment", "expected string"}};
    r.experiment = doc_in.at("experiment").get<std::string>();
    if (std::find(std::begin(kExperiments), std::end(kExperiments), r.experiment) == std::end(kExperiments)) {
        std::string names;
        for (const char* e : kExperiments) names += (names.empty() ? "" : ", ") + std::string(e);
        return {{"experiment", "unknown experiment '" + r.experiment + "'; expected one of " + names}};
    }

    json doc = doc_in;
    if (options && options->seed) doc["master_seed"] = *options->seed;
    if (options && options->trials) apply_trials(doc, r.experiment, *options->trials, diags);

    std::string experiment = r.experiment;
    std::vector<Field> fields{{"experiment", Kind::Text, [](const json&) {}, [&experiment] { return json(experiment); }, {}},
                              seed("master_seed", r.master_seed), flag("fixtures", r.fixtures)};
    for (auto& f : section_fields(r)) fields.push_back(std::move(f));
    bind_fields(doc, "", fields, diags);
    if (!diags.empty()) return diags;

    if (r.experiment == "federated")
        check_federated(doc, r, diags);
    else if (r.experiment == "landscape")
        check_landscape(r, diags);
    else if (r.experiment == "ajive_validate")
        check_ajive(r, diags);
    else if (r.experiment == "theory_check")
        check_theory(doc, r, diags);
    else
        check_partition(r, diags);
    r.config = echo(fields);
    return diags;
}

// ---------------------------------------------------------------------------
// Artifacts

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::string format_count(Index n) { return std::to_string(n); }

class Artifacts {
public:
    Artifacts(fs::path dir, const Resolved& r) : dir_(std::move(dir)), hash_(config_hash(r.config)), r_(r) {
        fs::create_directories(dir_);
    }

    ojson header() const {
        ojson j;
        j["config_hash"] = hash_;
        j["master_seed"] = r_.master_seed;
        return j;
    }

    void metrics(const CsvTable& table) const {
        write_csv(dir_ / "metrics.csv", table);
        ojson meta = header();
        meta["columns"] = table.header;
        write_json(dir_ / "metrics.meta.json", meta);
    }

    void timing(std::string stage, double ms) { timings_.rows.push_back({std::move(stage), format_real(ms)}); }

    ojson summary(const ojson& result) const {
        ojson j = header();
        j["experiment"] = r_.experiment;
        j["config"] = ojson::parse(r_.config.dump());
        j["result"] = result;
        write_json(dir_ / "summary.json", j);
        write_csv(dir_ / "timings.csv", timings_);
        return j;
    }

    void fixture(const std::string& name, const ojson& body) const {
        if (!r_.fixtures) return;
        fs::create_directories(dir_ / "fixtures");
        ojson j = header();
        for (const auto& [k, v] : body.items()) j[k] = v;
        write_json(dir_ / "fixtures" / (name + ".json"), j);
    }

private:
    static void write_json(const fs::path& path, const ojson& j) {
        std::ofstream out(path, std::ios::binary);
        require(static_cast<bool>(out), ErrorKind::InvalidInput, "cannot write " + path.string());
        out << j.dump(2) << '\n';
    }

    fs::path dir_;
    std::string hash_;
    const Resolved& r_;
    CsvTable timings_{{"stage", "wall_ms"}, {}};
};

ojson ojson_matrix(const Matrix& m) { return ojson::parse(matrix_to_json(m).dump()); }

ojson ojson_matrices(const std::vector<Matrix>& ms) {
    ojson a = ojson::array();
    for (const auto& m : ms) a.push_back(ojson_matrix(m));
    return a;
}

// ---------------------------------------------------------------------------
// Experiments

int run_federated(const Resolved& r, Artifacts& art, ojson& result) {
    const auto ens = tasks::QuadEnsemble::generate(r.ensemble, r.ensemble_seed);
    fedsim::FedConfig cfg = r.fed;
    if (cfg.client_weights.empty()) cfg.client_weights = ens.weights;
    Matrix theta0 = Matrix::Zero(ens.rows(), ens.cols());
    if (r.init_std > 0.0) {
        Rng rng(derive_seed(r.master_seed, kInit));
        theta0 = r.init_std * rng.gaussian_matrix(ens.rows(), ens.cols());
    }

    const auto run = fedsim::run_federation(theta0, fedsim::quad_federation(ens), cfg);

    CsvTable t{{"round", "global_loss", "mean_client_loss", "aggregate_tail", "max_local_deviation", "sync_mode",
                "participants", "diverged", "failed", "uplink_floats", "uplink_seeds"},
               {}};
    for (const auto& m : run.rounds) {
        t.rows.push_back({format_count(m.round), format_real(m.global_loss), format_real(m.mean_client_loss),
                          format_real(m.aggregate_tail), format_real(m.max_local_deviation),
                          fedsim::to_string(m.sync_mode), format_count(m.participants), format_count(m.diverged),
                          m.failed ? "1" : "0", format_count(m.uplink_floats), format_count(m.uplink_seeds)});
        art.timing("round_" + std::to_string(m.round), m.wall_ms);
    }
    art.metrics(t);

    const bool failed = !run.rounds.empty() && run.rounds.back().failed;
    result["rounds_completed"] = run.rounds.size();
    result["failed"] = failed;
    if (!run.rounds.empty()) {
        result["global_loss"] = run.rounds.back().global_loss;
        result["mean_client_loss"] = run.rounds.back().mean_client_loss;
    }
    result["excess_loss"] = ens.excess_loss(run.state.theta_bar);
    result["optimum_loss"] = ens.global_loss(ens.optimum);

    ojson fx;
    fx["weights"] = ens.weights;
    fx["centers"] = ojson_matrices(ens.centers);
    fx["curvatures"] = ojson_matrices(ens.curvatures);
    fx["optimum"] = ojson_matrix(ens.optimum);
    art.fixture("ensemble", fx);
    ojson th;
    th["theta_bar"] = ojson_matrix(run.state.theta_bar);
    art.fixture("theta_final", th);
    return failed ? kExitDiverged : kExitOk;
}

int run_landscape(const Resolved& r, Artifacts& art, ojson& result) {
    const auto land = tasks::SoftminLandscape::build(r.landscape);
    CsvTable t{{"method", "trials", "flat_rate", "sharp_rate", "unconverged_rate"}, {}};
    for (const auto& name : r.methods) {
        const auto start = Clock::now();
        const auto rates = tasks::run_landscape_trials(static_cast<std::size_t>(r.trap_trials),
                                                       tasks::trap_method_from_string(name), land, r.trap,
                                                       r.master_seed);
        art.timing(name, elapsed_ms(start));
        t.rows.push_back({name, format_count(r.trap_trials), format_real(rates.flat_rate),
                          format_real(rates.sharp_rate), format_real(rates.unconverged_rate)});
        ojson m;
        m["flat_rate"] = rates.flat_rate;
        m["sharp_rate"] = rates.sharp_rate;
        m["unconverged_rate"] = rates.unconverged_rate;
        result[name] = m;
    }
    art.metrics(t);

    ojson fx;
    fx["e1"] = ojson_matrix(land.e1);
    fx["e2"] = ojson_matrix(land.e2);
    fx["lora_a0"] = ojson_matrix(land.lora_a0);
    art.fixture("landscape", fx);
    return kExitOk;
}

struct AjiveErrors {
    double ajive = 0.0;
    double naive = 0.0;
    double truncated = 0.0;
};

int run_ajive_validate(const Resolved& r, Artifacts& art, ojson& result) {
    CsvTable t{{"clients", "seeds", "ajive_error", "naive_error", "truncated_error"}, {}};
    result["rows"] = ojson::array();
    for (const Index k : r.client_counts) {
        const auto start = Clock::now();
        auto cfg = r.ajive_data;
        cfg.clients = k;
        const std::vector<double> weights(static_cast<std::size_t>(k), 1.0 / static_cast<double>(k));
        std::vector<AjiveErrors> errs(static_cast<std::size_t>(r.ajive_seeds));
        parallel_for(errs.size(), [&](std::size_t s) {
            const auto data = tasks::gen_ajive_validation(cfg, derive_seed(r.master_seed, kAjiveData, s));
            ajive::SyncOptions opts;
            opts.seed = derive_seed(r.master_seed, kAjiveSync, s);
            const Matrix synced = ajive::sync_second_moments(data.views, r.joint_rank, weights, opts);
            Matrix mean = Matrix::Zero(cfg.rows, cfg.cols);
            for (std::size_t i = 0; i < data.views.size(); ++i) mean += weights[i] * data.views[i];
            errs[s] = {(synced - data.v_star).norm(), (mean - data.v_star).norm(),
                       (linalg::rank_r_truncate(mean, r.joint_rank) - data.v_star).norm()};
        });
        AjiveErrors avg;
        for (const auto& e : errs) {
            avg.ajive += e.ajive;
            avg.naive += e.naive;
            avg.truncated += e.truncated;
        }
        const double n = static_cast<double>(errs.size());
        avg = {avg.ajive / n, avg.naive / n, avg.truncated / n};
        art.timing("clients_" + std::to_string(k), elapsed_ms(start));
        t.rows.push_back({format_count(k), format_count(r.ajive_seeds), format_real(avg.ajive), format_real(avg.naive),
                          format_real(avg.truncated)});
        ojson row;
        row["clients"] = k;
        row["ajive_error"] = avg.ajive;
        row["naive_error"] = avg.naive;
        row["truncated_error"] = avg.truncated;
        result["rows"].push_back(row);

        if (r.fixtures) {
            const auto data = tasks::gen_ajive_validation(cfg, derive_seed(r.master_seed, kAjiveData, 0));
            ojson fx;
            fx["clients"] = k;
            fx["v_star"] = ojson_matrix(data.v_star);
            fx["views"] = ojson_matrices(data.views);
            art.fixture("ajive_clients_" + std::to_string(k), fx);
        }
    }
    art.metrics(t);
    return kExitOk;
}

int run_theory_check(const Resolved& r, Artifacts& art, ojson& result) {
    const auto ens = tasks::QuadEnsemble::generate(r.ensemble, r.ensemble_seed);
    const auto& p = r.whp;
    CsvTable t{{"check", "optimizer", "bias_v", "runs", "count", "fraction", "bound", "max_value", "mean_value", "pass"},
               {}};
    bool all_pass = true;
    const auto add = [&](std::vector<std::string> row, bool pass) {
        row.push_back(pass ? "1" : "0");
        t.rows.push_back(std::move(row));
        all_pass = all_pass && pass;
    };

    auto start = Clock::now();
    const auto env = theory::check_noise_envelope(p, r.checks.envelope_trials, derive_seed(r.master_seed, kEnvelope));
    const Index critical = theory::binomial_upper_critical(env.trials, p.delta, 0.99);
    add({"noise_envelope", "", "", format_count(env.trials), format_count(env.exceedances), format_real(env.fraction),
         format_real(env.envelope), format_count(critical), ""},
        env.exceedances <= critical);
    art.timing("noise_envelope", elapsed_ms(start));

    for (const auto& name : r.checks.optimizers) {
        start = Clock::now();
        const auto opt = theory::whp_optimizer_from_string(name);
        const auto c = theory::check_containment(ens, p, opt, r.checks.runs, derive_seed(r.master_seed, kContainment));
        add({"containment", name, format_real(p.bias_v), format_count(c.runs), format_count(c.violations),
             format_real(c.violation_fraction), format_real(c.bound), format_real(c.max_deviation),
             format_real(c.mean_max_deviation)},
            c.violation_fraction <= p.delta);
        art.timing("containment_" + name, elapsed_ms(start));
    }

    double previous = -1.0;
    for (const double bv : r.checks.bias_v_sweep) {
        start = Clock::now();
        auto q = p;
        q.bias_v = bv;
        // One seed for the whole sweep, so every bias sees the same noise.
        const auto c = theory::check_containment(ens, q, theory::WhpOptimizer::AdamW, r.checks.runs,
                                                 derive_seed(r.master_seed, kBiasSweep));
        add({"bias_v_sweep", "adamw", format_real(bv), format_count(c.runs), format_count(c.violations),
             format_real(c.violation_fraction), format_real(c.bound), format_real(c.max_deviation),
             format_real(c.mean_max_deviation)},
            c.mean_max_deviation > previous);
        previous = c.mean_max_deviation;
        art.timing("bias_v_" + format_real(bv), elapsed_ms(start));
    }

    start = Clock::now();
    auto q = p;
    q.lr = *r.checks.corollary_lr;
    const auto cor = theory::check_rms_corollary(ens, q, r.checks.corollary_runs, derive_seed(r.master_seed, kCorollary));
    add({"rms_corollary", "sgd", "", format_count(r.checks.corollary_runs), "", "", format_real(cor.rhs), "",
         format_real(cor.lhs)},
        cor.holds);
    art.timing("rms_corollary", elapsed_ms(start));

    art.metrics(t);
    result["all_pass"] = all_pass;
    result["envelope"] = env.envelope;
    result["envelope_exceedances"] = env.exceedances;
    result["corollary_lhs"] = cor.lhs;
    result["corollary_rhs"] = cor.rhs;
    ojson fx;
    fx["weights"] = ens.weights;
    fx["centers"] = ojson_matrices(ens.centers);
    fx["curvatures"] = ojson_matrices(ens.curvatures);
    art.fixture("ensemble", fx);
    return kExitOk;
}

int run_partition_stats(const Resolved& r, Artifacts& art, ojson& result) {
    const auto& d = r.partition;
    const auto labels = tasks::balanced_labels(static_cast<std::size_t>(d.samples), static_cast<int>(d.classes));
    CsvTable t{{"trial", "min_samples", "max_samples", "mean_classes_above", "mean_max_proportion"}, {}};
    double classes_total = 0.0;
    const auto start = Clock::now();
    for (Index trial = 0; trial < d.trials; ++trial) {
        const auto part = tasks::dirichlet_partition(labels, static_cast<std::size_t>(d.clients), d.alpha,
                                                     derive_seed(r.master_seed, kPartition, trial));
        std::size_t lo = labels.size();
        std::size_t hi = 0;
        double max_prop = 0.0;
        for (std::size_t i = 0; i < part.assignments.size(); ++i) {
            lo = std::min(lo, part.assignments[i].size());
            hi = std::max(hi, part.assignments[i].size());
            max_prop += *std::max_element(part.proportions[i].begin(), part.proportions[i].end());
        }
        max_prop /= static_cast<double>(part.assignments.size());
        const double above = tasks::mean_classes_above(part, d.threshold);
        classes_total += above;
        t.rows.push_back({format_count(trial), std::to_string(lo), std::to_string(hi), format_real(above),
                          format_real(max_prop)});
        if (trial == 0) {
            ojson fx;
            fx["assignments"] = part.assignments;
            fx["proportions"] = part.proportions;
            art.fixture("partition", fx);
        }
    }
    art.timing("partition", elapsed_ms(start));
    art.metrics(t);
    result["mean_classes_above"] = classes_total / static_cast<double>(d.trials);
    return kExitOk;
}

}  // namespace

// ---------------------------------------------------------------------------
// Public API

std::string to_string(const Diagnostic& d) { return (d.path.empty() ? std::string("<root>") : d.path) + ": " + d.message; }

std::vector<Diagnostic> validate_config(const json& doc) {
    Resolved r;
    return resolve(doc, nullptr, r);
}

RunOutcome run(const json& doc, const RunOptions& options) {
    RunOutcome outcome;
    Resolved r;
    outcome.diagnostics = resolve(doc, &options, r);
    if (!outcome.diagnostics.empty()) {
        outcome.exit_code = kExitConfig;
        return outcome;
    }
    Artifacts art(options.out, r);
    ojson result = ojson::object();
    const auto start = Clock::now();
    try {
        if (r.experiment == "federated")
            outcome.exit_code = run_federated(r, art, result);
        else if (r.experiment == "landscape")
            outcome.exit_code = run_landscape(r, art, result);
        else if (r.experiment == "ajive_validate")
            outcome.exit_code = run_ajive_validate(r, art, result);
        else if (r.experiment == "theory_check")
            outcome.exit_code = run_theory_check(r, art, result);
        else
            outcome.exit_code = run_partition_stats(r, art, result);
    } catch (const Error& e) {
        outcome.diagnostics.push_back({r.experiment, e.what()});
        switch (e.kind()) {
            case ErrorKind::Diverged: outcome.exit_code = kExitDiverged; break;
            case ErrorKind::InvalidInput:
            case ErrorKind::PreconditionViolation: outcome.exit_code = kExitConfig; break;
            default: outcome.exit_code = kExitFailure; break;
        }
        result["error"] = e.what();
    }
    art.timing("total", elapsed_ms(start));
    outcome.summary = art.summary(result);
    return outcome;
}

std::string format_real(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

std::string config_hash(const json& resolved) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char c : resolved.dump()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void write_csv(const fs::path& path, const CsvTable& table) {
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::InvalidInput, "cannot write " + path.string());
    const auto line = [&out](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
        out << '\n';
    };
    line(table.header);
    for (const auto& row : table.rows) line(row);
}

CsvTable read_csv(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::InvalidInput, "cannot read " + path.string());
    const auto split = [](const std::string& line) {
        std::vector<std::string> cells;
        std::size_t begin = 0;
        while (true) {
            const auto comma = line.find(',', begin);
            cells.push_back(line.substr(begin, comma - begin));
            if (comma == std::string::npos) break;
            begin = comma + 1;
        }
        return cells;
    };
    CsvTable table;
    std::string line;
    if (std::getline(in, line)) table.header = split(line);
    while (std::getline(in, line))
        if (!line.empty()) table.rows.push_back(split(line));
    return table;
}

json matrix_to_json(const Matrix& m) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(m.size()));
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Matrix matrix_from_json(const json& j) {
    require(j.is_object() && j.contains("rows") && j.contains("cols") && j.contains("data"), ErrorKind::InvalidInput,
            "matrix fixture needs rows, cols and data");
    const auto rows = j.at("rows").get<Index>();
    const auto cols = j.at("cols").get<Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    require(rows >= 0 && cols >= 0 && static_cast<Index>(data.size()) == rows * cols, ErrorKind::InvalidInput,
            "matrix fixture data size does not match its shape");
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j2 = 0; j2 < cols; ++j2) m(i, j2) = data[static_cast<std::size_t>(i * cols + j2)];
    return m;
}

}  // namespace fedlr::cli
