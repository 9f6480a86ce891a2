#include "mffbsde/cli.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mffbsde/coefficients.hpp"
#include "mffbsde/errors.hpp"
#include "mffbsde/io.hpp"
#include "mffbsde/measure.hpp"
#include "mffbsde/mfg.hpp"
#include "mffbsde/parallel.hpp"
#include "mffbsde/picard.hpp"

namespace mffbsde::cli {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

constexpr const char* kVersion = "0.1.0";

// Nash spot check budget for game runs. A handful of deviations at a fifth
// of the control scale keeps the artifact cheap; exhaustive sweeps belong
// to the verification suites.
constexpr std::size_t kRunDeviationCount = 6;
constexpr double kRunDeviationMagnitude = 0.2;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SchemaError("cannot read config file " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return std::move(buffer).str();
}

std::uint64_t parse_seed_text(const std::string& text, const std::string& what) {
    std::uint64_t value = 0;
    const char* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (text.empty() || ec != std::errc() || ptr != end)
        throw SchemaError(what + " must be an unsigned integer, got '" + text + "'");
    return value;
}

bool all_digits(const std::string& token) {
    return !token.empty() && std::all_of(token.begin(), token.end(), [](unsigned char ch) {
               return std::isdigit(ch) != 0;
           });
}

std::size_t parse_index(const std::string& token, const std::string& path) {
    std::size_t value = 0;
    const char* end = token.data() + token.size();
    const auto [ptr, ec] = std::from_chars(token.data(), end, value);
    if (ec != std::errc() || ptr != end)
        throw SchemaError("override path '" + path + "' has no array index in '" + token + "'");
    return value;
}

json vector_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

json summary_json(const FlowSummary& summary) {
    json rows = json::array();
    for (const SummaryRow& row : summary.rows) {
        rows.push_back(json{{"time", row.time},
                            {"population", row.population},
                            {"mean", vector_json(row.mean)},
                            {"std", vector_json(row.std_dev)},
                            {"q05", vector_json(row.q05)},
                            {"q25", vector_json(row.q25)},
                            {"q50", vector_json(row.q50)},
                            {"q75", vector_json(row.q75)},
                            {"q95", vector_json(row.q95)}});
    }
    return rows;
}

json report_json(const FixedPointReport& report, const PsiConfig& config) {
    json pops = json::array();
    for (const PopulationResidual& r : report.residual.populations)
        pops.push_back(json{{"forward", r.forward},
                            {"backward", r.backward},
                            {"terminal", r.terminal},
                            {"marginal", r.marginal}});
    json out;
    out["converged"] = report.converged;
    out["hit_max_iter"] = report.hit_max_iter;
    out["iterations"] = report.rho_history.size();
    out["rho_history"] = report.rho_history;
    out["tol"] = config.tol;
    out["holder_modulus"] = report.holder;
    out["residual"] = json{{"populations", std::move(pops)},
                           {"max_forward", report.residual.max_forward()},
                           {"max_backward", report.residual.max_backward()},
                           {"max_terminal", report.residual.max_terminal()},
                           {"max_marginal", report.residual.max_marginal()}};
    return out;
}

json equilibrium_json(const EquilibriumResult& eq, const NashReport& nash) {
    json costs = json::array();
    for (const CostEstimate& c : eq.costs)
        costs.push_back(json{{"mean", c.mean}, {"standard_error", c.standard_error}});
    json deviations = json::array();
    for (const auto& records : nash.deviations) {
        json one = json::array();
        for (const DeviationRecord& d : records)
            one.push_back(json{{"gap", d.gap}, {"pooled_se", d.pooled_se}});
        deviations.push_back(std::move(one));
    }
    json out;
    out["converged"] = eq.fixed_point.converged;
    out["hit_max_iter"] = eq.fixed_point.hit_max_iter;
    out["iterations"] = eq.fixed_point.rho_history.size();
    out["costs"] = std::move(costs);
    out["nash"] = json{{"passed", nash.passed},
                       {"worst_gap", nash.worst_gap},
                       {"worst_gap_se", nash.worst_gap_se},
                       {"deviations", std::move(deviations)}};
    return out;
}

json validation_json(const ValidationReport& report) {
    json entries = json::array();
    for (const ValidationEntry& e : report.entries)
        entries.push_back(json{{"check", e.check},
                               {"population", e.population},
                               {"passed", e.passed},
                               {"observed", e.observed},
                               {"bound", e.bound},
                               {"detail", e.detail}});
    return json{{"all_passed", report.all_passed()}, {"entries", std::move(entries)}};
}

const char* verdict_name(ClusterVerdict verdict) {
    switch (verdict) {
        case ClusterVerdict::unique_candidate:
            return "unique_candidate";
        case ClusterVerdict::multiple_fixed_points:
            return "multiple_fixed_points";
        case ClusterVerdict::inconclusive:
            break;
    }
    return "inconclusive";
}

/// Collects written artifacts so the manifest can list every file with its
/// content hash. The manifest itself is written last and not listed.
struct ArtifactSink {
    std::string dir;
    json listing = json::object();

    void put(const std::string& name, std::string_view content) {
        io::write_file(dir + "/" + name, content);
        listing[name] = json{{"path", name}, {"sha256", io::sha256_hex(content)}};
    }
};

std::string numbered(const char* stem, std::size_t pop, std::size_t count, const char* ext) {
    if (count <= 1) return std::string(stem) + ext;
    return std::string(stem) + "_" + std::to_string(pop) + ext;
}

void write_manifest(ArtifactSink& sink, const Scenario& s, json timings) {
    json manifest;
    manifest["artifacts"] = sink.listing;
    manifest["config_hash"] = io::sha256_hex(io::canonical_json(s.config));
    manifest["scenario"] = s.name;
    manifest["mode"] = to_string(s.solver.mode);
    manifest["seed"] = s.solver.seed;
    // Wall clock lives only here, keeping every other artifact byte
    // reproducible for identical configs and seeds.
    manifest["timings"] = std::move(timings);
    manifest["version"] = kVersion;
    io::write_file(sink.dir + "/manifest.json", io::canonical_json(manifest));
}

MeasureFlow initial_dirac_flow(const std::vector<Eigen::VectorXd>& states, const TimeGrid& grid) {
    std::vector<std::vector<Eigen::VectorXd>> atoms(states.size());
    for (std::size_t i = 0; i < states.size(); ++i) atoms[i].assign(grid.points(), states[i]);
    return MeasureFlow::dirac(grid, atoms);
}

void apply_thread_cap(const CliOptions& options) {
    if (!options.threads) return;
    if (*options.threads < 1) throw SchemaError("threads must be at least 1");
    par::set_max_threads(*options.threads);
}

void write_solution_diagnostics(ArtifactSink& sink, const Scenario& s,
                                const std::vector<FBSDESolution>& solutions, bool dump_paths) {
    const std::size_t n = solutions.size();
    for (std::size_t i = 0; i < n; ++i) {
        sink.put(numbered("backward_summary", i, n, ".csv"),
                 io::backward_summary_csv(solutions[i].backward));
        if (solutions[i].weighted())
            sink.put(numbered("weight_diagnostic", i, n, ".csv"),
                     io::weight_diagnostic_csv(s.grid, solutions[i].weights));
        if (dump_paths)
            sink.put(numbered("paths", i, n, ".csv"), io::paths_csv(solutions[i].paths));
    }
}

template <typename Body>
int guard(Body&& body) {
    try {
        return body();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitError;
    }
}

}  // namespace

void apply_override(json& config, const std::string& path, const std::string& raw) {
    std::vector<std::string> tokens;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = path.find('.', start);
        if (dot == std::string::npos) {
            tokens.push_back(path.substr(start));
            break;
        }
        tokens.push_back(path.substr(start, dot - start));
        start = dot + 1;
    }
    if (std::any_of(tokens.begin(), tokens.end(),
                    [](const std::string& t) { return t.empty(); }))
        throw SchemaError("override path '" + path + "' must be dot separated nonempty keys");

    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;

    json* node = &config;
    auto step = [&path](json& current, const std::string& token) -> json& {
        if (current.is_array()) {
            if (!all_digits(token))
                throw SchemaError("override path '" + path + "' uses key '" + token +
                                  "' to index an array");
            const std::size_t idx = parse_index(token, path);
            if (idx >= current.size())
                throw SchemaError("override path '" + path + "' runs past the end of an array");
            return current[idx];
        }
        if (current.is_object() || current.is_null()) return current[token];
        throw SchemaError("override path '" + path + "' descends into a scalar");
    };
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i) node = &step(*node, tokens[i]);
    step(*node, tokens.back()) = std::move(value);
}

Scenario resolve_scenario(const CliOptions& options) {
    if (!options.scenario.empty() && !options.config_path.empty())
        throw SchemaError("give a scenario name or a config file, not both");

    json config;
    std::vector<ExpectedOutcome> expected;
    if (!options.scenario.empty()) {
        Scenario base = scenario_by_name(options.scenario);
        config = std::move(base.config);
        expected = std::move(base.expected);
    } else if (!options.config_path.empty()) {
        config = json::parse(read_text_file(options.config_path));
    } else {
        throw SchemaError("a scenario name or a config file is required");
    }

    for (const auto& [path, raw] : options.overrides) apply_override(config, path, raw);
    if (options.mode) config["solver"]["mode"] = *options.mode;
    if (options.seed) {
        config["solver"]["seed"] = *options.seed;
    } else if (const char* env = std::getenv("MFFBSDE_SEED")) {
        config["solver"]["seed"] = parse_seed_text(env, "MFFBSDE_SEED");
    }

    Scenario scenario = scenario_custom(config);
    // Catalog expectations survive resolution; overrides may loosen their
    // relevance but the values document the defaults they came from.
    if (!expected.empty()) scenario.expected = std::move(expected);
    return scenario;
}

int cmd_run(const CliOptions& options) {
    return guard([&]() -> int {
        const auto start = Clock::now();
        apply_thread_cap(options);
        Scenario s = resolve_scenario(options);

        ArtifactSink sink{options.out_dir};
        json timings = json::object();
        bool converged = false;
        bool hit_cap = false;

        if (s.is_game) {
            const auto solve_start = Clock::now();
            EquilibriumResult eq = solve_equilibrium(s.game, s.grid, s.solver);
            timings["solve_seconds"] = seconds_since(solve_start);

            const auto nash_start = Clock::now();
            const NashReport nash = verify_equilibrium(s.game, eq, kRunDeviationCount,
                                                       kRunDeviationMagnitude, s.solver.seed);
            timings["nash_seconds"] = seconds_since(nash_start);

            sink.put("fixedpoint_report.json",
                     io::canonical_json(report_json(eq.fixed_point, s.solver)));
            sink.put("measure_flow.csv", io::measure_flow_csv(summarize(eq.fixed_point.flow)));
            sink.put("equilibrium.json", io::canonical_json(equilibrium_json(eq, nash)));
            for (std::size_t i = 0; i < eq.controls.size(); ++i)
                sink.put(numbered("control_table", i, eq.controls.size(), ".csv"),
                         io::control_table_csv(eq.controls[i]));
            write_solution_diagnostics(sink, s, eq.solutions, options.dump_paths);
            converged = eq.fixed_point.converged;
            hit_cap = eq.fixed_point.hit_max_iter;
        } else {
            const auto solve_start = Clock::now();
            const MeasureFlow start_flow = initial_dirac_flow(s.system.initial_states, s.grid);
            const FixedPointReport report = iterate(s.system, start_flow, s.solver);
            // The iteration evaluated the map at report.flow last, so this
            // recall reproduces the final decoupled solutions bit for bit.
            const PsiResult image = psi_map_detailed(s.system, report.flow, s.solver);
            timings["solve_seconds"] = seconds_since(solve_start);

            sink.put("fixedpoint_report.json", io::canonical_json(report_json(report, s.solver)));
            sink.put("measure_flow.csv", io::measure_flow_csv(summarize(report.flow)));
            write_solution_diagnostics(sink, s, image.solutions, options.dump_paths);
            converged = report.converged;
            hit_cap = report.hit_max_iter;
        }

        timings["total_seconds"] = seconds_since(start);
        write_manifest(sink, s, std::move(timings));
        if (converged) return kExitOk;
        return hit_cap ? kExitMaxIter : kExitOk;
    });
}

int cmd_validate(const CliOptions& options) {
    return guard([&]() -> int {
        const auto start = Clock::now();
        apply_thread_cap(options);
        const Scenario s = resolve_scenario(options);
        const PopulationSystem system = s.is_game ? assemble_pontryagin(s.game) : s.system;

        ProbeSpec spec = ProbeSpec::defaults(s.grid);
        spec.seed = s.solver.seed;
        const ValidationReport report = validate_assumptions(system, spec);

        ArtifactSink sink{options.out_dir};
        sink.put("validation_report.json", io::canonical_json(validation_json(report)));
        json timings = json::object();
        timings["total_seconds"] = seconds_since(start);
        write_manifest(sink, s, std::move(timings));
        return report.all_passed() ? kExitOk : kExitValidationFail;
    });
}

int cmd_multistart(const CliOptions& options) {
    return guard([&]() -> int {
        const auto start = Clock::now();
        apply_thread_cap(options);
        const Scenario s = resolve_scenario(options);
        if (s.inits.levels.size() < 2)
            throw SchemaError("multistart needs at least two init levels, got " +
                              std::to_string(s.inits.levels.size()));
        const PopulationSystem system = s.is_game ? assemble_pontryagin(s.game) : s.system;
        const std::vector<MeasureFlow> inits = make_init_flows(s, s.inits);

        const auto solve_start = Clock::now();
        const MultiStartResult result = multi_start(system, inits, s.solver);
        json timings = json::object();
        timings["solve_seconds"] = seconds_since(solve_start);

        json runs = json::array();
        for (const FixedPointReport& r : result.reports)
            runs.push_back(json{{"converged", r.converged},
                                {"hit_max_iter", r.hit_max_iter},
                                {"iterations", r.rho_history.size()},
                                {"rho_final", r.rho_history.empty() ? 0.0 : r.rho_history.back()}});

        json rho = json::array();
        for (Eigen::Index i = 0; i < result.pairwise_rho.rows(); ++i) {
            json row = json::array();
            for (Eigen::Index k = 0; k < result.pairwise_rho.cols(); ++k)
                row.push_back(result.pairwise_rho(i, k));
            rho.push_back(std::move(row));
        }

        json clusters = json::array();
        for (std::size_t c = 0; c < result.cluster_count; ++c) {
            json members = json::array();
            int representative = -1;
            for (std::size_t r = 0; r < result.cluster_of.size(); ++r) {
                if (result.cluster_of[r] != static_cast<int>(c)) continue;
                members.push_back(r);
                if (representative < 0) representative = static_cast<int>(r);
            }
            json entry;
            entry["members"] = std::move(members);
            entry["representative_run"] = representative;
            if (representative >= 0)
                entry["flow"] = summary_json(summarize(result.reports[representative].flow));
            clusters.push_back(std::move(entry));
        }

        json doc;
        doc["verdict"] = verdict_name(result.verdict);
        doc["cluster_count"] = result.cluster_count;
        doc["cluster_of"] = result.cluster_of;
        doc["pairwise_rho"] = std::move(rho);
        doc["runs"] = std::move(runs);
        doc["clusters"] = std::move(clusters);
        doc["inits"] = json{{"kind", s.inits.kind}, {"levels", s.inits.levels}};

        ArtifactSink sink{options.out_dir};
        sink.put("clusters.json", io::canonical_json(doc));
        timings["total_seconds"] = seconds_since(start);
        write_manifest(sink, s, std::move(timings));
        return kExitOk;
    });
}

const char* tool_version() { return kVersion; }

}  // namespace mffbsde::cli
