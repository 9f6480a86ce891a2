#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "mffbsde/coefficients.hpp"
#include "mffbsde/grid.hpp"
#include "mffbsde/measure.hpp"

namespace mffbsde {

/// Forward Euler ensemble with its Brownian increments. Storage is
/// time-major: states[k] is particles x state_dim, increments[k] is
/// particles x noise_dim for step k.
struct PathEnsemble {
    TimeGrid grid;
    int state_dim = 0;
    int noise_dim = 0;
    std::vector<Eigen::MatrixXd> states;      // grid.points() entries
    std::vector<Eigen::MatrixXd> increments;  // grid.steps() entries

    std::size_t particles() const {
        return states.empty() ? 0 : static_cast<std::size_t>(states.front().rows());
    }
    Eigen::VectorXd state(std::size_t particle, std::size_t k) const {
        return states[k].row(static_cast<Eigen::Index>(particle)).transpose();
    }
};

/// One Euler step; simulation and replay tests must share this expression
/// so stored paths reproduce bit-identically.
inline Eigen::VectorXd euler_step(const Eigen::VectorXd& x, const Eigen::VectorXd& drift,
                                  const Eigen::MatrixXd& sigma, double dt,
                                  const Eigen::VectorXd& dw) {
    return x + drift * dt + sigma * dw;
}

/// Feedback closures give the backward value / gradient surrogate at a grid
/// step. They receive the step index (not the time) so implementations can
/// look up per-step regression tables.
using ValueFeedback = std::function<Eigen::VectorXd(std::size_t, const Eigen::VectorXd&)>;
using GradientFeedback = std::function<Eigen::MatrixXd(std::size_t, const Eigen::VectorXd&)>;

/// Reference dynamics: dX = h dt + sigma dW. Increments for (particle p,
/// step k) come from the counter stream (seed, population, p, k), so the
/// result is bit-identical for any worker count.
PathEnsemble simulate_reference(const CoefficientBundle& c, const Eigen::VectorXd& x0,
                                const TimeGrid& grid, std::size_t particles, std::uint64_t seed,
                                std::uint32_t population = 0);

/// Coupled dynamics under a frozen flow: dX = (h + b(t, X, y(t,X), z(t,X),
/// flow_t)) dt + sigma dW. Uses the same increment stream as
/// simulate_reference, so with b = 0 the two ensembles coincide exactly.
PathEnsemble simulate_feedback(const CoefficientBundle& c, const Eigen::VectorXd& x0,
                               const TimeGrid& grid, std::size_t particles, std::uint64_t seed,
                               const ValueFeedback& value, const GradientFeedback& gradient,
                               const MeasureFlow& flow, std::uint32_t population = 0);

}  // namespace mffbsde
