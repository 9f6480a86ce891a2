#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "mffbsde/grid.hpp"

namespace mffbsde {

/// Weighted point cloud on R^m. Weights are normalized on construction; an
/// empty weight vector means uniform. The mean is cached so coefficient
/// closures can read it per evaluation without an O(n) pass.
class EmpiricalMeasure {
public:
    /// Uniform weights. samples is n x m, one row per sample.
    explicit EmpiricalMeasure(Eigen::MatrixXd samples);

    /// Explicit weights (any positive scale, normalized internally).
    EmpiricalMeasure(Eigen::MatrixXd samples, const Eigen::VectorXd& weights);

    std::size_t size() const { return static_cast<std::size_t>(samples_.rows()); }
    int dimension() const { return static_cast<int>(samples_.cols()); }
    const Eigen::MatrixXd& samples() const { return samples_; }

    bool is_uniform() const { return weights_.size() == 0; }
    double weight(std::size_t i) const {
        return is_uniform() ? 1.0 / static_cast<double>(size())
                            : weights_[static_cast<Eigen::Index>(i)];
    }
    /// Normalized weights; empty when uniform.
    const Eigen::VectorXd& stored_weights() const { return weights_; }

    const Eigen::VectorXd& mean() const { return mean_; }
    Eigen::VectorXd std_dev() const;

    /// Lower weighted quantile per coordinate: inf{x : F(x) >= q}.
    Eigen::VectorXd quantile(double q) const;

private:
    Eigen::MatrixXd samples_;
    Eigen::VectorXd weights_;  // empty = uniform, otherwise sums to 1
    Eigen::VectorXd mean_;
};

using Measures = std::vector<EmpiricalMeasure>;

/// One empirical measure per population per grid point. Storage is
/// time-major so coefficient evaluation can borrow the whole population
/// vector for a step without copying.
class MeasureFlow {
public:
    MeasureFlow() = default;
    MeasureFlow(TimeGrid grid, std::vector<Measures> steps);

    const TimeGrid& grid() const { return grid_; }
    std::size_t population_count() const { return steps_.empty() ? 0 : steps_.front().size(); }
    const Measures& at_step(std::size_t k) const { return steps_[k]; }
    const EmpiricalMeasure& measure(std::size_t population, std::size_t k) const {
        return steps_[k][population];
    }

    /// Dirac flow: one atom per population per grid point.
    static MeasureFlow dirac(const TimeGrid& grid,
                             const std::vector<std::vector<Eigen::VectorXd>>& atoms);

private:
    TimeGrid grid_;
    std::vector<Measures> steps_;  // [grid point][population]
};

/// Location and spread of one population's marginal at one grid point.
struct SummaryRow {
    double time = 0.0;
    std::size_t population = 0;
    Eigen::VectorXd mean;
    Eigen::VectorXd std_dev;
    Eigen::VectorXd q05, q25, q50, q75, q95;
};

/// Flow digest, time-major and population-minor. Iteration histories and
/// report writers keep this instead of the full particle clouds.
struct FlowSummary {
    std::vector<SummaryRow> rows;
};

FlowSummary summarize(const MeasureFlow& flow);

struct SlicedOptions {
    int projections = 128;
    std::uint64_t seed = 0x51CEDB07u;
};

/// Exact 1-Wasserstein distance between weighted atomic measures on R via
/// the quantile coupling (merge of the two weighted CDFs).
double wasserstein1_1d(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);

/// Sliced approximation for m >= 2: mean of 1-D distances over random unit
/// projections. Deterministic in opts.seed; projection j never depends on
/// the evaluation order.
double wasserstein1_sliced(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                           const SlicedOptions& opts = {});

/// Dispatches on dimension: exact in 1-D, sliced otherwise.
double wasserstein1(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                    const SlicedOptions& opts = {});

/// Product metric: sum of per-population distances.
double product_distance(const Measures& a, const Measures& b, const SlicedOptions& opts = {});

/// Flow metric: sup over grid points of the product metric.
double flow_distance(const MeasureFlow& a, const MeasureFlow& b, const SlicedOptions& opts = {});

/// max over grid pairs s < t of K(mu_t, mu_s) / sqrt(t - s). Diagnostic for
/// the square-root time regularity of a flow.
double holder_modulus(const MeasureFlow& flow, const SlicedOptions& opts = {});

}  // namespace mffbsde
