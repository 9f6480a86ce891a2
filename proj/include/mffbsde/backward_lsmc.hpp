#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

#include "mffbsde/coefficients.hpp"
#include "mffbsde/forward_sde.hpp"
#include "mffbsde/grid.hpp"
#include "mffbsde/measure.hpp"

namespace mffbsde {

/// Monomial features of total degree <= degree on standardized states, in
/// graded lexicographic order. dimension() = C(state_dim + degree, degree);
/// feature 0 is the intercept.
class RegressionBasis {
  public:
    /// Scalar intercept basis, the placeholder before a real fit arrives.
    RegressionBasis() : RegressionBasis(1, 0) {}
    RegressionBasis(Eigen::Index state_dim, int degree);

    Eigen::Index state_dim() const { return state_dim_; }
    int degree() const { return degree_; }
    Eigen::Index dimension() const { return static_cast<Eigen::Index>(exponents_.size()); }
    const std::vector<std::vector<int>>& exponents() const { return exponents_; }

    /// Writes dimension() feature values for one standardized state.
    void evaluate_into(const Eigen::VectorXd& standardized, double* out) const;

  private:
    Eigen::Index state_dim_;
    int degree_;
    std::vector<std::vector<int>> exponents_;
};

/// Fixed Tikhonov floor added to the normal equations. A fit with an LDLT
/// pivot attributable to the ridge alone is rank deficient and fails loudly.
inline constexpr double kRidgeFloor = 1e-8;

/// Per-step regression tables. Coefficients live on the full feature set;
/// features touching a coordinate with no cross-sectional spread are fitted
/// as zero, so evaluation never depends on such coordinates.
struct StepFit {
    Eigen::VectorXd shift;
    Eigen::VectorXd scale;
    std::vector<char> active;  // per state coordinate, 1 if it carried spread
    Eigen::MatrixXd u;         // dimension() x value_dim
    Eigen::MatrixXd d;         // dimension() x (value_dim * noise_dim); empty at the last point
};

/// Backward solution along a frozen forward ensemble. y_values[k] holds the
/// fitted particle values, except the last grid point which holds the exact
/// terminal data per particle. z_values[k] holds fitted particle gradients
/// for step k, flattened as (value j, noise l) -> column j * noise_dim + l.
struct BackwardSolution {
    TimeGrid grid;
    Eigen::Index value_dim = 1;
    Eigen::Index noise_dim = 1;
    RegressionBasis basis;
    std::vector<StepFit> fits;              // grid.points() entries
    std::vector<Eigen::MatrixXd> y_values;  // grid.points() entries, particles x value_dim
    std::vector<Eigen::MatrixXd> z_values;  // grid.steps() entries

    /// Value surrogate u(t_k, x), t_index <= grid.steps(). At a training
    /// state this reproduces the stored fitted value bit for bit.
    Eigen::VectorXd evaluate_u(std::size_t t_index, const Eigen::VectorXd& x) const;

    /// Gradient surrogate d(t_k, x) as value_dim x noise_dim, defined on
    /// steps only (t_index < grid.steps()).
    Eigen::MatrixXd evaluate_d(std::size_t t_index, const Eigen::VectorXd& x) const;
};

/// Backward Euler sweep with per-step least squares projection:
///   Z_k  = fit[ Y_{k+1} dW_k^T / dt_k ]
///   Y_k  = fit[ Y_{k+1} + f(t_k, X_k, y_arg, Z_k, mu_k) dt_k ]
/// where y_arg starts as the step-ahead fitted value and is refined once by
/// re-evaluating f at the newly fitted Y_k. The terminal condition is applied
/// exactly per particle; a terminal fit is still stored so evaluate_u works
/// at the last grid point. Per-step features are standardized by the
/// cross-sectional mean and deviation. A collapsed cross-section (no
/// coordinate spread) is legitimate at the first grid point, where the fit
/// degenerates to the plain mean, and rank deficient anywhere else.
/// driver and terminal are called concurrently and must be pure.
BackwardSolution solve_bsde(const PathEnsemble& paths, const DriverFn& driver,
                            const TerminalFn& terminal, const MeasureFlow& flow,
                            const RegressionBasis& basis);

}  // namespace mffbsde
