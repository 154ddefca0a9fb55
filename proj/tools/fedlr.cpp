// Copyright (C) 2026 The fedlr Authors
// SPDX-License-Identifier: Apache-2.0

// fedlr run --config <path> [--seed <int>] [--out <dir>] [--trials <int>]
// fedlr validate --config <path>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "cli.hpp"

namespace cli = fedlr::cli;

namespace {

std::optional<cli::json> load(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        std::cerr << "config error: cannot read " << path << '\n';
        return std::nullopt;
    }
    try {
        return cli::json::parse(in);
    } catch (const cli::json::parse_error& e) {
        std::cerr << "config error: " << path << ": " << e.what() << '\n';
        return std::nullopt;
    }
}

void report(const std::vector<cli::Diagnostic>& diags) {
    for (const auto& d : diags) std::cerr << "config error: " << cli::to_string(d) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated low-rank optimization experiments"};
    app.require_subcommand(1);

    std::string config;
    std::uint64_t seed = 0;
    std::string out = ".";
    long long trials = 0;

    auto* run = app.add_subcommand("run", "Run the experiment named in the config");
    run->add_option("--config", config, "JSON run document")->required();
    auto* seed_opt = run->add_option("--seed", seed, "Master seed, replacing master_seed");
    run->add_option("--out", out, "Output directory")->capture_default_str();
    auto* trials_opt =
        run->add_option("--trials", trials, "Trial count for the experiment")->check(CLI::PositiveNumber);

    auto* validate = app.add_subcommand("validate", "Check a config and list its diagnostics");
    validate->add_option("--config", config, "JSON run document")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : cli::kExitConfig;
    }

    const auto doc = load(config);
    if (!doc) return cli::kExitConfig;

    if (validate->parsed()) {
        const auto diags = cli::validate_config(*doc);
        report(diags);
        if (!diags.empty()) return cli::kExitConfig;
        std::cout << "ok\n";
        return cli::kExitOk;
    }

    cli::RunOptions options;
    options.out = out;
    if (*seed_opt) options.seed = seed;
    if (*trials_opt) options.trials = static_cast<cli::Index>(trials);
    try {
        const auto outcome = cli::run(*doc, options);
        if (outcome.exit_code == cli::kExitConfig) {
            report(outcome.diagnostics);
        } else {
            for (const auto& d : outcome.diagnostics) std::cerr << "error: " << cli::to_string(d) << '\n';
        }
        if (outcome.exit_code == cli::kExitDiverged) std::cerr << "run diverged; see " << out << "/metrics.csv\n";
        if (outcome.exit_code == cli::kExitOk) std::cout << "wrote " << out << '\n';
        return outcome.exit_code;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return cli::kExitFailure;
    }
}
