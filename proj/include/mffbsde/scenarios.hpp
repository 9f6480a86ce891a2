#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "mffbsde/coefficients.hpp"
#include "mffbsde/grid.hpp"
#include "mffbsde/measure.hpp"
#include "mffbsde/mfg.hpp"
#include "mffbsde/picard.hpp"

namespace mffbsde {

/// A named numeric fact a scenario is expected to reproduce, the tolerance
/// checks compare at, and a short note on where the number comes from.
struct ExpectedOutcome {
    std::string name;
    double value = 0.0;
    double tolerance = 0.0;
    std::string source;
};

/// Initial mean flows for multistart probes. kind "sine" realizes the mean
/// flow level*sin(t) per level; kind "constant" a flat mean flow at level.
struct InitSpec {
    std::string kind = "constant";
    std::vector<double> levels;
};

/// Fully resolved run description. Exactly one of system/game is active,
/// selected by is_game. config holds the resolved JSON: feeding it back
/// through scenario_custom reproduces the same config byte for byte under
/// canonical serialization.
struct Scenario {
    std::string name;
    std::string description;
    bool is_game = false;
    PopulationSystem system;
    GameSpec game;
    TimeGrid grid;
    PsiConfig solver;
    InitSpec inits;
    std::vector<ExpectedOutcome> expected;
    nlohmann::json config;

    std::size_t population_count() const { return is_game ? game.size() : system.size(); }
};

/// Catalog names in fixed order.
std::vector<std::string> scenario_names();

/// Builtin lookup. Throws UnknownBundle for names outside the catalog.
Scenario scenario_by_name(const std::string& name);

/// The non-unique fixed-point system: horizon pi/4, scalar state, drift
/// clip(y), driver and terminal value clip of the own-population mean,
/// unit noise. Every mean flow amplitude*sin(t) with |amplitude| <= clip
/// is a fixed point of the measure map, so the requested amplitudes double
/// as multistart inits. Throws ClipViolation when an amplitude leaves the
/// clip region.
Scenario scenario_counterexample(double clip = 10.0,
                                 const std::vector<double>& mean_amplitudes = {0.2, 0.6});

/// One-population control game with Lipschitz data: drift c_lip*tanh(x) +
/// 0.5*c_lip*tanh(population mean) - a, cost |a|^2 + c_lip*softplus(x),
/// zero terminal cost, box-constrained nonnegative controls. The adjoint is
/// pinned between 0 and e^{c_lip*(T-t)} - 1 by comparison, and the best
/// response is (y v 0)/2. Throws SchemaError unless c_lip, horizon and
/// sigma are positive.
Scenario scenario_bounded_adjoint_game(double c_lip = 1.0, double horizon = 1.0,
                                       double sigma = 1.0);

/// Resolves a JSON config against the bundle registry. Unknown bundle names
/// throw UnknownBundle; any other malformed field throws SchemaError naming
/// the field. The returned scenario's config is the input with every
/// default materialized.
Scenario scenario_custom(const nlohmann::json& config);

/// Dirac mean flows realizing spec on the scenario grid, one per level.
std::vector<MeasureFlow> make_init_flows(const Scenario& scenario, const InitSpec& spec);

std::string to_string(PsiMode mode);
PsiMode psi_mode_from_string(const std::string& text);

}  // namespace mffbsde
