#pragma once

#include <cstddef>
#include <vector>

namespace mffbsde {

/// Strictly increasing partition of [0, T] starting at 0. Grids compare by
/// exact equality: flows and ensembles may only be combined on the same grid.
class TimeGrid {
public:
    TimeGrid() = default;
    explicit TimeGrid(std::vector<double> points);

    /// n_steps uniform steps over [0, horizon]; endpoints are exact.
    static TimeGrid uniform(double horizon, std::size_t n_steps);

    /// Uniform grid with the step count rounded from horizon / dt.
    static TimeGrid from_step(double horizon, double dt);

    std::size_t points() const { return t_.size(); }
    std::size_t steps() const { return t_.empty() ? 0 : t_.size() - 1; }
    double operator[](std::size_t k) const { return t_[k]; }
    double horizon() const { return t_.back(); }
    double dt(std::size_t k) const { return t_[k + 1] - t_[k]; }
    const std::vector<double>& values() const { return t_; }

    bool operator==(const TimeGrid& other) const { return t_ == other.t_; }

    /// Throws GridMismatch unless both grids are identical.
    void require_same(const TimeGrid& other, const char* context) const;

    /// Index of the grid point equal to t up to rounding noise. Throws
    /// GridMismatch when t lies between points or outside the horizon.
    std::size_t index_of(double t) const;

private:
    std::vector<double> t_;
};

}  // namespace mffbsde
