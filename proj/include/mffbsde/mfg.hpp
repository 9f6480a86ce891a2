#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "mffbsde/coefficients.hpp"
#include "mffbsde/measure.hpp"
#include "mffbsde/picard.hpp"

namespace mffbsde {

/// Compact convex box of admissible controls.
struct ControlSet {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;

    Eigen::Index dimension() const { return lower.size(); }
    void validate() const;
    bool contains(const Eigen::VectorXd& a, double slack = 1e-9) const;
    Eigen::VectorXd project(const Eigen::VectorXd& a) const;
};

/// Controlled coefficient signatures. The measure argument carries one
/// marginal per population, as everywhere else.
using ControlledDriftFn = std::function<Eigen::VectorXd(double, const Eigen::VectorXd&,
                                                        const Measures&, const Eigen::VectorXd&)>;
using RunningCostFn = std::function<double(double, const Eigen::VectorXd&, const Measures&,
                                           const Eigen::VectorXd&)>;
using TerminalCostFn = std::function<double(const Eigen::VectorXd&, const Measures&)>;
using ControlFeedback = std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>;

/// One population of the game. The state drift splits into an uncontrolled
/// reference part h and the controlled part b that enters the Hamiltonian;
/// the running cost f includes any control penalty. Gradient hooks are
/// optional: central finite differences with fd_step fill in for absent
/// hooks unless allow_finite_difference is cleared, and a closed-form
/// Hamiltonian minimizer hook short-circuits the projected Newton search.
struct GamePopulation {
    int state_dim = 1;
    int noise_dim = 1;

    StateDriftFn h;       // may be empty (treated as zero)
    ControlledDriftFn b;  // bounded controlled drift
    DiffusionFn sigma;
    RunningCostFn f;
    TerminalCostFn g;
    ControlSet controls;

    std::function<Eigen::MatrixXd(double, const Eigen::VectorXd&, const Measures&,
                                  const Eigen::VectorXd&)>
        db_dx;  // (i,j) = d b_i / d x_j
    std::function<Eigen::MatrixXd(double, const Eigen::VectorXd&, const Measures&,
                                  const Eigen::VectorXd&)>
        db_da;  // (i,j) = d b_i / d a_j
    std::function<Eigen::VectorXd(double, const Eigen::VectorXd&, const Measures&,
                                  const Eigen::VectorXd&)>
        df_dx;
    std::function<Eigen::VectorXd(double, const Eigen::VectorXd&, const Measures&,
                                  const Eigen::VectorXd&)>
        df_da;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Measures&)> dg_dx;
    std::function<Eigen::VectorXd(double, const Eigen::VectorXd&, const Eigen::VectorXd&,
                                  const Measures&)>
        minimizer;  // closed-form arg min of the Hamiltonian in the control

    double fd_step = 1e-5;
    bool allow_finite_difference = true;
    double convexity = 1.0;  // declared strong convexity of the cost in the control

    // Declared analytic constants, copied onto the assembled adjoint system.
    // The drift bound must cover h + b at the best response over the box.
    double growth_constant = 1.0;
    double growth_exponent = 1.0;
    double ellipticity = 1.0;
};

struct GameSpec {
    std::vector<GamePopulation> populations;
    std::vector<Eigen::VectorXd> initial_states;

    std::size_t size() const { return populations.size(); }
    void validate() const;
};

/// Pontryagin Hamiltonian b(t,x,m,a) . y + f(t,x,m,a). Throws
/// ControlOutOfSet when a leaves the box.
double hamiltonian(const GamePopulation& pop, double t, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& y, const Measures& m, const Eigen::VectorXd& a);

/// Pointwise best response: the closed-form hook when present, otherwise
/// projected Newton over the box with hook-or-difference gradients, stopping
/// at projected-gradient norm 1e-8 within 100 steps. Throws NonConvergence
/// past the step cap. The declared strong convexity makes ties impossible.
Eigen::VectorXd minimize_hamiltonian(const GamePopulation& pop, double t,
                                     const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                     const Measures& m);

struct DriverMaximum {
    Eigen::VectorXd control;
    double value = 0.0;
};

/// sup over the control box of f(t,x,m,a) + z . reduced_drift(a): tensor
/// grid search at the given per-coordinate resolution followed by one local
/// polish by projected gradient ascent. Ties go to the lexicographically
/// smallest control.
DriverMaximum maximize_shifted_driver(const GamePopulation& pop, double t,
                                      const Eigen::VectorXd& x, const Measures& m,
                                      const Eigen::VectorXd& z, int grid_resolution);

/// Builds the coupled equilibrium system: forward drift h + b at the best
/// response, backward driver d/dx H at the best response with the control
/// held fixed, terminal d/dx g. The adjoint lives in the state space, so the
/// bundle's value dimension equals its state dimension. Throws
/// MissingGradient at assembly when a required hook is absent and finite
/// differencing is disabled.
PopulationSystem assemble_pontryagin(const GameSpec& game);

struct CostEstimate {
    double mean = 0.0;
    double standard_error = 0.0;
};

/// Simulates the controlled state under the frozen flow (same increment
/// stream as the solver) and averages the left-endpoint quadrature of the
/// running cost plus the terminal cost. The control closure must map into
/// the box; violations throw ControlOutOfSet.
CostEstimate estimate_cost(const GameSpec& game, std::size_t pop_index,
                           const ControlFeedback& control, const MeasureFlow& flow,
                           std::size_t n_particles, std::uint64_t seed);

/// Equilibrium feedback surrogate sampled on a fixed node set, one row
/// block per grid point. For scalar states the nodes span the bulk of the
/// final law; for higher dimensions the table holds the control at the
/// per-time mean state and nodes stays empty.
struct ControlTable {
    std::vector<double> times;
    Eigen::VectorXd nodes;
    std::vector<Eigen::MatrixXd> values;  // per grid point: rows x control dim
};

struct EquilibriumResult {
    FixedPointReport fixed_point;
    std::vector<FBSDESolution> solutions;  // final decoupled solution per population
    std::vector<ControlTable> controls;
    std::vector<CostEstimate> costs;
};

/// Assembles the Pontryagin system, runs the damped fixed-point iteration
/// from the point-mass flow at the initial states, and evaluates control
/// tables and equilibrium costs at the final flow.
EquilibriumResult solve_equilibrium(const GameSpec& game, const TimeGrid& grid,
                                    const PsiConfig& config);

/// Best-response feedback (t, x) -> control built from a solved
/// equilibrium. The closure borrows the result's surrogates: it stays valid
/// only while result is alive.
ControlFeedback equilibrium_feedback(const GameSpec& game, const EquilibriumResult& result,
                                     std::size_t pop_index);

struct DeviationRecord {
    double gap = 0.0;  // deviation cost minus equilibrium cost
    double pooled_se = 0.0;
};

struct NashReport {
    std::vector<std::vector<DeviationRecord>> deviations;  // per population
    double worst_gap = 0.0;
    double worst_gap_se = 0.0;
    bool passed = true;
};

/// Unilateral-deviation check of the Nash property: the population flow
/// stays frozen while one representative plays the equilibrium control
/// perturbed by smooth time bumps times random directions, projected into
/// the box. A deviation that lowers the cost by more than three pooled
/// standard errors fails the check; the worst (most negative) gap is
/// reported either way. Deviation costs share the equilibrium cost's seed,
/// so the comparison is paired.
NashReport verify_equilibrium(const GameSpec& game, const EquilibriumResult& result,
                              std::size_t n_perturbations, double magnitude,
                              std::uint64_t seed);

}  // namespace mffbsde
