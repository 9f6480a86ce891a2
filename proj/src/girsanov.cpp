#include "mffbsde/girsanov.hpp"

#include <cmath>
#include <string>

#include "mffbsde/errors.hpp"
#include "mffbsde/parallel.hpp"

namespace mffbsde {

WeightEnsemble doleans_exponential(const PathEnsemble& paths, const StateDriftFn& integrand,
                                   std::size_t begin_step, std::size_t end_step,
                                   const WeightState* restart) {
    const std::size_t n_particles = paths.particles();
    const std::size_t n_steps = paths.grid.steps();
    if (n_particles == 0) throw EmptySamples("weight computation needs at least one particle");
    if (begin_step > end_step || end_step > n_steps)
        throw IndexOutOfRange("weight step range [" + std::to_string(begin_step) + ", " +
                              std::to_string(end_step) + "] does not fit " +
                              std::to_string(n_steps) + " steps");
    if (restart && (restart->log_weight.size() != static_cast<Eigen::Index>(n_particles) ||
                    restart->compensation.size() != static_cast<Eigen::Index>(n_particles)))
        throw LengthMismatch("restart state size does not match the particle count");

    WeightEnsemble out{paths.grid, begin_step, end_step, {}, {}, {}};
    const auto rows = static_cast<Eigen::Index>(n_particles);
    const auto cols = static_cast<Eigen::Index>(paths.grid.points());
    out.weights.resize(rows, cols);
    out.log_weights.resize(rows, cols);
    out.compensations.resize(rows, cols);

    par::parallel_for(n_particles, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p) {
            const auto row = static_cast<Eigen::Index>(p);
            double log_weight = restart ? restart->log_weight[row] : 0.0;
            double compensation = restart ? restart->compensation[row] : 0.0;
            const double start_weight = std::exp(log_weight);
            if (!std::isfinite(start_weight) || start_weight <= 0.0)
                throw NonFiniteWeight(p, begin_step, "restart weight is not positive and finite");
            for (std::size_t k = 0; k <= begin_step; ++k) {
                out.weights(row, static_cast<Eigen::Index>(k)) = start_weight;
                out.log_weights(row, static_cast<Eigen::Index>(k)) = log_weight;
                out.compensations(row, static_cast<Eigen::Index>(k)) = compensation;
            }
            for (std::size_t k = begin_step; k < end_step; ++k) {
                const double t = paths.grid[k];
                const double dt = paths.grid.dt(k);
                const Eigen::VectorXd value = integrand(t, paths.state(p, k));
                if (value.size() != paths.noise_dim)
                    throw DimensionMismatch("weight integrand must match the noise dimension " +
                                            std::to_string(paths.noise_dim));
                const double drive =
                    value.dot(paths.increments[k].row(row).transpose()) -
                    0.5 * value.squaredNorm() * dt;
                // Kahan step: the compensation keeps what the running log
                // lost to rounding, which makes restarts exact.
                const double adjusted = drive - compensation;
                const double updated = log_weight + adjusted;
                compensation = (updated - log_weight) - adjusted;
                log_weight = updated;
                const double weight = std::exp(log_weight);
                if (!std::isfinite(weight) || weight <= 0.0)
                    throw NonFiniteWeight(p, k, "weight left the positive finite range");
                out.weights(row, static_cast<Eigen::Index>(k + 1)) = weight;
                out.log_weights(row, static_cast<Eigen::Index>(k + 1)) = log_weight;
                out.compensations(row, static_cast<Eigen::Index>(k + 1)) = compensation;
            }
            for (std::size_t k = end_step; k < n_steps; ++k) {
                out.weights(row, static_cast<Eigen::Index>(k + 1)) =
                    out.weights(row, static_cast<Eigen::Index>(end_step));
                out.log_weights(row, static_cast<Eigen::Index>(k + 1)) = log_weight;
                out.compensations(row, static_cast<Eigen::Index>(k + 1)) = compensation;
            }
        }
    });
    return out;
}

WeightEnsemble doleans_exponential(const PathEnsemble& paths, const StateDriftFn& integrand) {
    return doleans_exponential(paths, integrand, 0, paths.grid.steps(), nullptr);
}

EmpiricalMeasure weighted_law(const PathEnsemble& paths, const WeightEnsemble& weights,
                              std::size_t t_index) {
    paths.grid.require_same(weights.grid, "weighted law");
    if (t_index >= paths.grid.points())
        throw IndexOutOfRange("weighted law index " + std::to_string(t_index) +
                              " exceeds last grid point " +
                              std::to_string(paths.grid.points() - 1));
    return EmpiricalMeasure(paths.states[t_index],
                            weights.weights.col(static_cast<Eigen::Index>(t_index)));
}

Measures weighted_laws(const std::vector<PathEnsemble>& paths,
                       const std::vector<WeightEnsemble>& weights, std::size_t t_index) {
    if (paths.size() != weights.size())
        throw PopulationCountMismatch("got " + std::to_string(paths.size()) +
                                      " ensembles for " + std::to_string(weights.size()) +
                                      " weight sets");
    Measures laws;
    laws.reserve(paths.size());
    for (std::size_t i = 0; i < paths.size(); ++i)
        laws.push_back(weighted_law(paths[i], weights[i], t_index));
    return laws;
}

WeightDiagnostic martingale_diagnostic(const WeightEnsemble& weights) {
    WeightDiagnostic report;
    const auto n = static_cast<double>(weights.weights.rows());
    report.rows.reserve(static_cast<std::size_t>(weights.weights.cols()));
    for (Eigen::Index k = 0; k < weights.weights.cols(); ++k) {
        const auto col = weights.weights.col(k);
        WeightDiagnosticRow row;
        row.time = weights.grid[static_cast<std::size_t>(k)];
        row.mean = col.mean();
        row.standard_error =
            std::sqrt((col.array() - row.mean).square().sum() / (n > 1.0 ? n - 1.0 : 1.0) / n);
        const auto logs = weights.log_weights.col(k);
        row.log_spread = logs.maxCoeff() - logs.minCoeff();
        const double sum = col.sum();
        const double sum_sq = col.array().square().sum();
        row.effective_samples = sum_sq > 0.0 ? sum * sum / sum_sq : 0.0;
        row.degenerate = row.effective_samples < 0.01 * n;
        report.any_degenerate = report.any_degenerate || row.degenerate;
        report.rows.push_back(row);
    }
    return report;
}

}  // namespace mffbsde
