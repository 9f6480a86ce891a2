#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "mffbsde/backward_lsmc.hpp"
#include "mffbsde/coefficients.hpp"
#include "mffbsde/forward_sde.hpp"
#include "mffbsde/measure.hpp"

namespace mffbsde {

/// How the decoupled solution is turned back into a law flow. girsanov
/// reweights the reference ensemble with its change-of-measure weights;
/// direct re-runs the forward equation with the fitted feedback closures.
enum class PsiMode { girsanov, direct };

struct PsiConfig {
    PsiMode mode = PsiMode::girsanov;
    std::size_t n_particles = 10000;
    int basis_degree = 3;  // per population; feature dimensions follow the state dims
    std::uint64_t seed = 1;
    double damping = 1.0;  // fraction of each mixed cross-section drawn from the map output
    double tol = 0.02;     // rho threshold; tol = 0 forces a full max_iter run
    std::size_t max_iter = 20;
    SlicedOptions sliced{};  // transport estimator settings shared by rho and residuals

    /// Throws SchemaError naming the offending field.
    void validate() const;
};

/// One population's decoupled candidate solution: the path ensemble the
/// backward surrogate rides on and, when the map ran in girsanov mode, the
/// per-grid-point weights that tilt that ensemble back to the coupled law.
/// An empty weight matrix means uniform (direct mode or injected solutions).
struct FBSDESolution {
    PathEnsemble paths;
    BackwardSolution backward;
    Eigen::MatrixXd weights;  // particles x grid points

    bool weighted() const { return weights.size() != 0; }
};

struct PsiResult {
    MeasureFlow flow;
    std::vector<FBSDESolution> solutions;  // one per population
};

/// Monte Carlo residual norms of one population's candidate solution. The
/// forward and backward norms are the max over steps of the RMS over
/// particles of the one-step defect; terminal is the max particle gap at the
/// horizon; marginal is the max over grid points of the transport distance
/// between the checked flow and the ensemble law.
struct PopulationResidual {
    double forward = 0.0;
    double backward = 0.0;
    double terminal = 0.0;
    double marginal = 0.0;
};

struct ResidualReport {
    std::vector<PopulationResidual> populations;

    double max_forward() const;
    double max_backward() const;
    double max_terminal() const;
    double max_marginal() const;
};

/// Full record of one damped fixed-point run. Histories always cover every
/// map evaluation performed; hitting the iteration cap is a reported state,
/// not an exception. flow is the last iterate the map was evaluated at, so
/// rho_history.back() measures exactly how far flow is from its image.
struct FixedPointReport {
    std::vector<FlowSummary> iterates;
    std::vector<double> rho_history;
    bool converged = false;
    bool hit_max_iter = false;
    MeasureFlow flow;
    ResidualReport residual;
    double holder = 0.0;  // square-root time modulus of the final flow
};

/// The measure-flow map: freeze mu, decouple each population by a change of
/// drift, solve the resulting backward equation by regression, and return
/// the law flow of the re-coupled forward states. Populations are
/// independent given mu (their randomness lives on disjoint streams), so
/// evaluation order cannot matter; both modes are deterministic in
/// config.seed. The same seed is reused on every call, which makes the map
/// a fixed function of its measure argument rather than a noisy estimate
/// re-drawn per call.
MeasureFlow psi_map(const PopulationSystem& system, const MeasureFlow& mu,
                    const PsiConfig& config);

/// psi_map plus the per-population solutions behind the returned flow.
PsiResult psi_map_detailed(const PopulationSystem& system, const MeasureFlow& mu,
                           const PsiConfig& config);

/// Checks a candidate (flow, solution) pair against the coupled dynamics.
/// All four norms are evaluated through the stored regression surrogates.
/// For weighted solutions the stored increments are Brownian under the
/// reference measure, so the coupled increment is reconstructed by
/// subtracting the reduced drift times dt before forming the defects; the
/// forward and backward residuals of both modes then test the same coupled
/// recursion.
ResidualReport residual_check(const PopulationSystem& system, const MeasureFlow& flow,
                              const std::vector<FBSDESolution>& solutions,
                              const SlicedOptions& opts = {});

/// Damped fixed-point iteration mu^{k+1} = mix(mu^k, psi(mu^k)). The mix
/// resamples each cross-section at the particle level: a damping-fraction of
/// the budget is drawn from the map output and the rest from the carried
/// iterate, so every iterate stays a uniform-weight empirical flow. Stops
/// when rho(mu^k, psi(mu^k)) <= tol or after max_iter map evaluations.
FixedPointReport iterate(const PopulationSystem& system, const MeasureFlow& mu0,
                         const PsiConfig& config);

enum class ClusterVerdict { unique_candidate, multiple_fixed_points, inconclusive };

/// Runs iterate from every init and clusters the converged terminal flows
/// by pairwise rho at 3x tol. Two clusters are definitive evidence of
/// non-uniqueness at the configured resolution; a single cluster is only a
/// uniqueness candidate, and any unconverged run downgrades it.
struct MultiStartResult {
    std::vector<FixedPointReport> reports;
    Eigen::MatrixXd pairwise_rho;  // terminal flow distances, all runs
    std::vector<int> cluster_of;   // -1 for unconverged runs
    std::size_t cluster_count = 0;
    ClusterVerdict verdict = ClusterVerdict::inconclusive;
};

MultiStartResult multi_start(const PopulationSystem& system,
                             const std::vector<MeasureFlow>& inits, const PsiConfig& config);

}  // namespace mffbsde
