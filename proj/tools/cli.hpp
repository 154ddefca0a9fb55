// Copyright (C) 2026 The fedlr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fedlr/linalg.hpp"
#include "json.hpp"

namespace fedlr::cli {

using json = nlohmann::json;
using linalg::Index;
using linalg::Matrix;

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitConfig = 2, kExitDiverged = 3 };

struct Diagnostic {
    std::string path;  // dotted key path such as "federated.participants"
    std::string message;
};

std::string to_string(const Diagnostic& d);

/// Schema and consistency violations of a run document; empty when valid.
std::vector<Diagnostic> validate_config(const json& doc);

struct RunOptions {
    std::optional<std::uint64_t> seed;  // replaces master_seed
    std::optional<Index> trials;        // replaces the experiment's trial count
    std::filesystem::path out = ".";
};

struct RunOutcome {
    int exit_code = kExitOk;
    std::vector<Diagnostic> diagnostics;
    nlohmann::ordered_json summary;  // as written to summary.json
};

/// Validates the document, runs its experiment and writes metrics.csv,
/// metrics.meta.json, summary.json, timings.csv and, when requested, fixtures/.
RunOutcome run(const json& doc, const RunOptions& options);

/// Shortest decimal form that parses back to the same double.
std::string format_real(double x);

/// FNV-1a 64 of the compact serialization, as 16 hex digits.
std::string config_hash(const json& resolved);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

/// Plain comma-separated values; fields never contain commas or quotes.
void write_csv(const std::filesystem::path& path, const CsvTable& table);
CsvTable read_csv(const std::filesystem::path& path);

/// {"rows": r, "cols": c, "data": [row-major entries]}
json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const json& j);

}  // namespace fedlr::cli
