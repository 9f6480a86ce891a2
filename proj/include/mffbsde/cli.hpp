#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mffbsde/scenarios.hpp"

namespace mffbsde::cli {

/// Exit codes shared by every subcommand, fixed for scripting: 0 success,
/// 1 usage or runtime error, 2 iteration budget exhausted without
/// convergence, 3 assumption probe failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitMaxIter = 2;
inline constexpr int kExitValidationFail = 3;

/// Parsed command line, shared by the subcommands. Exactly one of scenario
/// (builtin catalog name) and config_path (scenario file) must be set.
struct CliOptions {
    std::string scenario;
    std::string config_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;  // beats MFFBSDE_SEED, which beats the config
    std::optional<int> threads;         // caps workers, never changes results
    std::optional<std::string> mode;    // girsanov or direct
    std::vector<std::pair<std::string, std::string>> overrides;  // dotted path, raw value
    bool dump_paths = false;  // also dump raw particle paths on run
};

/// Applies one dotted-path override to a config document. Numeric segments
/// index arrays (in range only), any other segment addresses an object key
/// and creates it when missing. The raw value is taken as JSON when it
/// parses and as a plain string otherwise, so solver.tol=0.1 assigns a
/// number and solver.mode=direct assigns a string.
void apply_override(nlohmann::json& config, const std::string& path, const std::string& raw);

/// Resolves the scenario reference, applies --set overrides, the mode flag
/// and the seed precedence, then realizes the scenario. Throws on unknown
/// names, unreadable files, and schema violations.
Scenario resolve_scenario(const CliOptions& options);

/// Solves the scenario and writes the run artifacts into out_dir:
/// manifest.json, fixedpoint_report.json, measure_flow.csv, a backward
/// summary per population, weight diagnostics in girsanov mode, and for
/// game scenarios equilibrium.json plus control tables. Returns kExitOk on
/// convergence, kExitMaxIter when the iteration budget ran out (artifacts
/// are still written), kExitError on any error.
int cmd_run(const CliOptions& options);

/// Runs the assumption probes against the scenario's coefficient system
/// (games are probed through their assembled adjoint system) and writes
/// validation_report.json plus manifest.json. Returns kExitOk when every
/// probe passes, kExitValidationFail when any fails, kExitError on error.
int cmd_validate(const CliOptions& options);

/// Runs the fixed-point iteration from every configured init flow and
/// writes clusters.json (verdict, pairwise distances, per-cluster
/// representative flows) plus manifest.json. Needs at least two inits.
/// Returns kExitOk once the probe ran, whatever the verdict; kExitError on
/// usage or runtime errors.
int cmd_multistart(const CliOptions& options);

const char* tool_version();

}  // namespace mffbsde::cli
