#include "mffbsde/forward_sde.hpp"

#include <cmath>

#include "mffbsde/errors.hpp"
#include "mffbsde/parallel.hpp"
#include "mffbsde/rng.hpp"

namespace mffbsde {

namespace {

// Shared Euler sweep. drift_at must return the full drift for (step, x).
template <class DriftAt>
PathEnsemble simulate(const CoefficientBundle& c, const Eigen::VectorXd& x0, const TimeGrid& grid,
                      std::size_t particles, std::uint64_t seed, std::uint32_t population,
                      DriftAt&& drift_at) {
    if (particles == 0) throw EmptySamples("simulation needs at least one particle");
    if (x0.size() != c.state_dim) throw DimensionMismatch("initial state dimension mismatch");

    PathEnsemble out;
    out.grid = grid;
    out.state_dim = c.state_dim;
    out.noise_dim = c.noise_dim;
    out.states.resize(grid.points());
    out.increments.resize(grid.steps());
    for (auto& s : out.states)
        s.resize(static_cast<Eigen::Index>(particles), c.state_dim);
    for (auto& w : out.increments)
        w.resize(static_cast<Eigen::Index>(particles), c.noise_dim);
    out.states.front().rowwise() = x0.transpose();

    const std::uint32_t stream = rng::stream_id(rng::Stream::Forward, population);
    for (std::size_t k = 0; k < grid.steps(); ++k) {
        const double t = grid[k];
        const double dt = grid.dt(k);
        const double sqrt_dt = std::sqrt(dt);
        const Eigen::MatrixXd& curr = out.states[k];
        Eigen::MatrixXd& next = out.states[k + 1];
        Eigen::MatrixXd& dw_all = out.increments[k];
        par::parallel_for(particles, [&](std::size_t lo, std::size_t hi) {
            Eigen::VectorXd x(c.state_dim), dw(c.noise_dim);
            for (std::size_t p = lo; p < hi; ++p) {
                const auto row = static_cast<Eigen::Index>(p);
                x = curr.row(row).transpose();
                rng::fill_normals(seed, stream, static_cast<std::uint32_t>(p),
                                  static_cast<std::uint32_t>(k),
                                  {dw.data(), static_cast<std::size_t>(c.noise_dim)});
                dw *= sqrt_dt;
                dw_all.row(row) = dw.transpose();
                const Eigen::VectorXd x_next =
                    euler_step(x, drift_at(k, t, x), c.sigma(t, x), dt, dw);
                if (!x_next.allFinite())
                    throw NonFiniteState(p, k, "state left the representable range");
                next.row(row) = x_next.transpose();
            }
        });
    }
    return out;
}

}  // namespace

PathEnsemble simulate_reference(const CoefficientBundle& c, const Eigen::VectorXd& x0,
                                const TimeGrid& grid, std::size_t particles, std::uint64_t seed,
                                std::uint32_t population) {
    return simulate(c, x0, grid, particles, seed, population,
                    [&c](std::size_t, double t, const Eigen::VectorXd& x) {
                        return c.h(t, x);
                    });
}

PathEnsemble simulate_feedback(const CoefficientBundle& c, const Eigen::VectorXd& x0,
                               const TimeGrid& grid, std::size_t particles, std::uint64_t seed,
                               const ValueFeedback& value, const GradientFeedback& gradient,
                               const MeasureFlow& flow, std::uint32_t population) {
    grid.require_same(flow.grid(), "feedback simulation against frozen flow");
    return simulate(c, x0, grid, particles, seed, population,
                    [&](std::size_t k, double t, const Eigen::VectorXd& x) -> Eigen::VectorXd {
                        const Eigen::VectorXd y = value(k, x);
                        const Eigen::MatrixXd z = gradient(k, x);
                        return c.h(t, x) + c.b(t, x, y, z, flow.at_step(k));
                    });
}

}  // namespace mffbsde
