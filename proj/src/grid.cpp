#include "mffbsde/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mffbsde/errors.hpp"

namespace mffbsde {

TimeGrid::TimeGrid(std::vector<double> points) : t_(std::move(points)) {
    if (t_.size() < 2) throw LengthMismatch("time grid needs at least two points");
    if (t_.front() != 0.0) throw GridMismatch("time grid must start at 0");
    for (std::size_t k = 0; k + 1 < t_.size(); ++k) {
        if (!(t_[k] < t_[k + 1])) throw GridMismatch("time grid must be strictly increasing");
    }
    if (!std::isfinite(t_.back())) throw GridMismatch("time grid horizon must be finite");
}

TimeGrid TimeGrid::uniform(double horizon, std::size_t n_steps) {
    if (!(horizon > 0.0) || !std::isfinite(horizon))
        throw GridMismatch("horizon must be positive and finite");
    if (n_steps == 0) throw LengthMismatch("time grid needs at least one step");
    std::vector<double> pts(n_steps + 1);
    for (std::size_t k = 0; k <= n_steps; ++k)
        pts[k] = horizon * static_cast<double>(k) / static_cast<double>(n_steps);
    pts[0] = 0.0;
    pts[n_steps] = horizon;
    return TimeGrid(std::move(pts));
}

TimeGrid TimeGrid::from_step(double horizon, double dt) {
    if (!(dt > 0.0)) throw GridMismatch("dt must be positive");
    const double ratio = horizon / dt;
    const auto n = static_cast<std::size_t>(std::llround(ratio));
    if (n == 0) throw GridMismatch("dt exceeds the horizon");
    return uniform(horizon, n);
}

void TimeGrid::require_same(const TimeGrid& other, const char* context) const {
    if (!(*this == other))
        throw GridMismatch(std::string("time grids differ: ") + context);
}

std::size_t TimeGrid::index_of(double t) const {
    const auto it = std::lower_bound(t_.begin(), t_.end(), t);
    // Accept the neighbour on either side of the insertion point so that a
    // time reconstructed through arithmetic still lands on its grid point.
    const double tol = 1e-9 * std::max(1.0, std::abs(t_.back()));
    if (it != t_.end() && std::abs(*it - t) <= tol)
        return static_cast<std::size_t>(it - t_.begin());
    if (it != t_.begin() && std::abs(*(it - 1) - t) <= tol)
        return static_cast<std::size_t>(it - t_.begin()) - 1;
    throw GridMismatch("time " + std::to_string(t) + " is not a grid point");
}

}  // namespace mffbsde
