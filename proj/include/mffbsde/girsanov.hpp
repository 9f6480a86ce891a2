#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

#include "mffbsde/coefficients.hpp"
#include "mffbsde/forward_sde.hpp"
#include "mffbsde/grid.hpp"
#include "mffbsde/measure.hpp"

namespace mffbsde {

/// Per-particle accumulator state of the log-exponential recursion. Carrying
/// the compensation term lets a computation restart mid-grid and land on
/// bit-identical log weights.
struct WeightState {
    Eigen::VectorXd log_weight;
    Eigen::VectorXd compensation;
};

/// Exponential martingale weights along a reference ensemble. weights(p, k)
/// is the particle's weight at grid point k; column begin_step holds the
/// start state (ones for a fresh run) and columns outside [begin_step,
/// end_step] carry the nearest computed value.
struct WeightEnsemble {
    TimeGrid grid;
    std::size_t begin_step = 0;
    std::size_t end_step = 0;
    Eigen::MatrixXd weights;        // particles x grid.points()
    Eigen::MatrixXd log_weights;    // particles x grid.points()
    Eigen::MatrixXd compensations;  // particles x grid.points()

    std::size_t particles() const { return static_cast<std::size_t>(weights.rows()); }
    WeightState state_at(std::size_t k) const {
        return {log_weights.col(static_cast<Eigen::Index>(k)),
                compensations.col(static_cast<Eigen::Index>(k))};
    }
};

/// One row of the weight health report.
struct WeightDiagnosticRow {
    double time = 0.0;
    double mean = 0.0;
    double standard_error = 0.0;
    double log_spread = 0.0;  // max minus min log weight
    double effective_samples = 0.0;
    bool degenerate = false;  // effective samples below 1% of the ensemble
};

struct WeightDiagnostic {
    std::vector<WeightDiagnosticRow> rows;  // one per grid point
    bool any_degenerate = false;
};

/// Runs the recursion
///   log E_{k+1} = log E_k + integrand(t_k, X_k) . dW_k - |integrand|^2 dt_k / 2
/// in compensated log space over steps [begin_step, end_step), optionally
/// continuing from a prior state. Weights stay positive and finite or the
/// computation fails loudly; a weight that underflows to zero counts as a
/// failure because it would silently delete the particle from every
/// reweighted law. integrand is called concurrently and must be pure.
WeightEnsemble doleans_exponential(const PathEnsemble& paths, const StateDriftFn& integrand,
                                   std::size_t begin_step, std::size_t end_step,
                                   const WeightState* restart = nullptr);

/// Full-range weights started from ones.
WeightEnsemble doleans_exponential(const PathEnsemble& paths, const StateDriftFn& integrand);

/// Empirical law of the ensemble cross-section at t_index under the particle
/// weights of the same grid point.
EmpiricalMeasure weighted_law(const PathEnsemble& paths, const WeightEnsemble& weights,
                              std::size_t t_index);

/// One weighted law per population, assembled in population order.
Measures weighted_laws(const std::vector<PathEnsemble>& paths,
                       const std::vector<WeightEnsemble>& weights, std::size_t t_index);

/// Per-grid-point weight statistics. Effective sample size is
/// (sum w)^2 / sum w^2, which is invariant under rescaling, so raw weights
/// and normalized weights give the same number. Degeneracy is reported,
/// never repaired.
WeightDiagnostic martingale_diagnostic(const WeightEnsemble& weights);

}  // namespace mffbsde
