#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "mffbsde/cli.hpp"

namespace {

using mffbsde::cli::CliOptions;

/// Shared flags live on each subcommand so both orders parse:
/// `mffbsde run --scenario ou` and `mffbsde --help`.
void add_common_options(CLI::App& cmd, CliOptions& options,
                        std::vector<std::string>& set_args) {
    cmd.add_option("--scenario", options.scenario, "Builtin scenario name");
    cmd.add_option("--config", options.config_path, "Scenario config file (JSON)");
    cmd.add_option("--out", options.out_dir, "Output directory for artifacts");
    cmd.add_option("--seed", options.seed,
                   "RNG seed override (beats MFFBSDE_SEED, which beats the config)");
    cmd.add_option("--threads", options.threads, "Worker thread cap; never changes results");
    cmd.add_option("--mode", options.mode, "Decoupling mode: girsanov or direct");
    cmd.add_option("--set", set_args, "Config override as dotted.path=value, repeatable")
        ->take_all();
}

int split_overrides(const std::vector<std::string>& set_args, CliOptions& options) {
    for (const std::string& arg : set_args) {
        const std::size_t eq = arg.find('=');
        if (eq == std::string::npos || eq == 0) {
            std::fprintf(stderr, "error: --set expects dotted.path=value, got '%s'\n",
                         arg.c_str());
            return mffbsde::cli::kExitError;
        }
        options.overrides.emplace_back(arg.substr(0, eq), arg.substr(eq + 1));
    }
    return mffbsde::cli::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mean-field FBSDE solver: fixed points of the measure-flow map, "
                 "game equilibria, and assumption probes"};
    app.set_version_flag("--version", mffbsde::cli::tool_version());
    app.require_subcommand(1);

    CliOptions run_options, validate_options, multistart_options;
    std::vector<std::string> run_sets, validate_sets, multistart_sets;

    CLI::App* run = app.add_subcommand("run", "Solve a scenario and write run artifacts");
    add_common_options(*run, run_options, run_sets);
    run->add_flag("--dump-paths", run_options.dump_paths, "Also dump raw particle paths");

    CLI::App* validate =
        app.add_subcommand("validate", "Probe the scenario against the standing assumptions");
    add_common_options(*validate, validate_options, validate_sets);

    CLI::App* multistart =
        app.add_subcommand("multistart", "Iterate from every configured init and cluster the limits");
    add_common_options(*multistart, multistart_options, multistart_sets);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : mffbsde::cli::kExitError;
    }

    if (run->parsed()) {
        if (int rc = split_overrides(run_sets, run_options)) return rc;
        return mffbsde::cli::cmd_run(run_options);
    }
    if (validate->parsed()) {
        if (int rc = split_overrides(validate_sets, validate_options)) return rc;
        return mffbsde::cli::cmd_validate(validate_options);
    }
    if (int rc = split_overrides(multistart_sets, multistart_options)) return rc;
    return mffbsde::cli::cmd_multistart(multistart_options);
}
