#include "mffbsde/measure.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mffbsde/errors.hpp"
#include "mffbsde/parallel.hpp"
#include "mffbsde/rng.hpp"

namespace mffbsde {

namespace {

// 1-D atoms sorted ascending; weights normalized, empty = uniform.
struct SortedCloud {
    std::vector<double> values;
    std::vector<double> weights;

    double weight(std::size_t i) const {
        return weights.empty() ? 1.0 / static_cast<double>(values.size()) : weights[i];
    }
};

SortedCloud sort_cloud(const Eigen::VectorXd& values, const EmpiricalMeasure& source) {
    const auto n = static_cast<std::size_t>(values.size());
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double va = values[static_cast<Eigen::Index>(a)];
        const double vb = values[static_cast<Eigen::Index>(b)];
        if (va != vb) return va < vb;
        return a < b;  // stable under value ties
    });
    SortedCloud out;
    out.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.values[i] = values[static_cast<Eigen::Index>(order[i])];
    if (!source.is_uniform()) {
        out.weights.resize(n);
        for (std::size_t i = 0; i < n; ++i) out.weights[i] = source.weight(order[i]);
    }
    return out;
}

SortedCloud sort_coordinate(const EmpiricalMeasure& m) { return sort_cloud(m.samples().col(0), m); }

// Quantile coupling between two sorted weighted clouds: walks the merged
// CDF levels and integrates |F_mu^{-1} - F_nu^{-1}|.
double w1_sorted(const SortedCloud& mu, const SortedCloud& nu) {
    const std::size_t n = mu.values.size();
    const std::size_t m = nu.values.size();
    std::size_t i = 0, j = 0;
    double cum_mu = mu.weight(0);
    double cum_nu = nu.weight(0);
    double level = 0.0;
    double dist = 0.0;
    while (i < n && j < m) {
        const double next = std::min(cum_mu, cum_nu);
        dist += (next - level) * std::abs(mu.values[i] - nu.values[j]);
        level = next;
        if (cum_mu == next) {
            ++i;
            if (i < n) cum_mu += mu.weight(i);
        }
        if (cum_nu == next) {
            ++j;
            if (j < m) cum_nu += nu.weight(j);
        }
    }
    return dist;
}

Eigen::VectorXd unit_direction(int dim, std::uint64_t seed, std::uint32_t projection) {
    Eigen::VectorXd u(dim);
    for (std::uint32_t attempt = 0; attempt < 16; ++attempt) {
        rng::fill_normals(seed, rng::stream_id(rng::Stream::Slice), projection, attempt,
                          {u.data(), static_cast<std::size_t>(dim)});
        const double norm = u.norm();
        if (norm > 1e-12) return u / norm;
    }
    u.setZero();
    u[0] = 1.0;  // unreachable in practice
    return u;
}

void require_comparable(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    if (mu.dimension() != nu.dimension())
        throw DimensionMismatch("measures live on spaces of different dimension");
}

}  // namespace

EmpiricalMeasure::EmpiricalMeasure(Eigen::MatrixXd samples) : samples_(std::move(samples)) {
    if (samples_.rows() == 0 || samples_.cols() == 0)
        throw EmptySamples("empirical measure needs at least one sample");
    mean_ = samples_.colwise().mean();
}

EmpiricalMeasure::EmpiricalMeasure(Eigen::MatrixXd samples, const Eigen::VectorXd& weights)
    : samples_(std::move(samples)) {
    if (samples_.rows() == 0 || samples_.cols() == 0)
        throw EmptySamples("empirical measure needs at least one sample");
    if (weights.size() != samples_.rows())
        throw LengthMismatch("weight count does not match sample count");
    double total = 0.0;
    for (Eigen::Index i = 0; i < weights.size(); ++i) {
        const double w = weights[i];
        if (!std::isfinite(w) || w < 0.0)
            throw NegativeWeight("weights must be finite and non-negative");
        total += w;
    }
    if (!(total > 0.0)) throw NegativeWeight("weights must have positive total mass");
    weights_ = weights / total;
    mean_ = samples_.transpose() * weights_;
}

Eigen::VectorXd EmpiricalMeasure::std_dev() const {
    const Eigen::MatrixXd centered = samples_.rowwise() - mean_.transpose();
    Eigen::VectorXd var(dimension());
    if (is_uniform()) {
        var = centered.array().square().colwise().mean();
    } else {
        var = centered.array().square().matrix().transpose() * weights_;
    }
    return var.cwiseMax(0.0).cwiseSqrt();
}

Eigen::VectorXd EmpiricalMeasure::quantile(double q) const {
    if (!(q >= 0.0 && q <= 1.0)) throw IndexOutOfRange("quantile level outside [0, 1]");
    Eigen::VectorXd out(dimension());
    for (int c = 0; c < dimension(); ++c) {
        const SortedCloud cloud = sort_cloud(samples_.col(c), *this);
        double cum = 0.0;
        double value = cloud.values.back();
        for (std::size_t i = 0; i < cloud.values.size(); ++i) {
            cum += cloud.weight(i);
            if (cum >= q) {
                value = cloud.values[i];
                break;
            }
        }
        out[c] = value;
    }
    return out;
}

MeasureFlow::MeasureFlow(TimeGrid grid, std::vector<Measures> steps)
    : grid_(std::move(grid)), steps_(std::move(steps)) {
    if (steps_.size() != grid_.points())
        throw GridMismatch("measure flow does not cover the time grid");
    const std::size_t pops = steps_.front().size();
    if (pops == 0) throw PopulationCountMismatch("measure flow needs at least one population");
    for (const auto& step : steps_) {
        if (step.size() != pops)
            throw PopulationCountMismatch("population count varies along the flow");
    }
    for (std::size_t p = 0; p < pops; ++p) {
        const int dim = steps_.front()[p].dimension();
        for (const auto& step : steps_) {
            if (step[p].dimension() != dim)
                throw DimensionMismatch("population dimension varies along the flow");
        }
    }
}

MeasureFlow MeasureFlow::dirac(const TimeGrid& grid,
                               const std::vector<std::vector<Eigen::VectorXd>>& atoms) {
    if (atoms.empty()) throw PopulationCountMismatch("dirac flow needs at least one population");
    std::vector<Measures> steps(grid.points());
    for (std::size_t k = 0; k < grid.points(); ++k) {
        steps[k].reserve(atoms.size());
        for (const auto& path : atoms) {
            if (path.size() != grid.points())
                throw GridMismatch("dirac atom path does not cover the time grid");
            steps[k].emplace_back(Eigen::MatrixXd(path[k].transpose()));
        }
    }
    return MeasureFlow(grid, std::move(steps));
}

FlowSummary summarize(const MeasureFlow& flow) {
    FlowSummary out;
    const TimeGrid& grid = flow.grid();
    out.rows.reserve(grid.points() * flow.population_count());
    for (std::size_t k = 0; k < grid.points(); ++k) {
        const Measures& step = flow.at_step(k);
        for (std::size_t i = 0; i < step.size(); ++i) {
            const EmpiricalMeasure& m = step[i];
            SummaryRow row;
            row.time = grid[k];
            row.population = i;
            row.mean = m.mean();
            row.std_dev = m.std_dev();
            row.q05 = m.quantile(0.05);
            row.q25 = m.quantile(0.25);
            row.q50 = m.quantile(0.50);
            row.q75 = m.quantile(0.75);
            row.q95 = m.quantile(0.95);
            out.rows.push_back(std::move(row));
        }
    }
    return out;
}

double wasserstein1_1d(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    require_comparable(mu, nu);
    if (mu.dimension() != 1)
        throw DimensionMismatch("exact transport distance is implemented for 1-D measures");
    return w1_sorted(sort_coordinate(mu), sort_coordinate(nu));
}

double wasserstein1_sliced(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                           const SlicedOptions& opts) {
    require_comparable(mu, nu);
    if (opts.projections < 1) throw LengthMismatch("sliced distance needs at least one projection");
    const int dim = mu.dimension();
    const auto projections = static_cast<std::size_t>(opts.projections);
    const double total = par::blocked_reduce(
        projections, 0.0,
        [&](std::size_t, std::size_t begin, std::size_t end) {
            double acc = 0.0;
            for (std::size_t p = begin; p < end; ++p) {
                const Eigen::VectorXd u =
                    unit_direction(dim, opts.seed, static_cast<std::uint32_t>(p));
                const Eigen::VectorXd pm = mu.samples() * u;
                const Eigen::VectorXd pn = nu.samples() * u;
                acc += w1_sorted(sort_cloud(pm, mu), sort_cloud(pn, nu));
            }
            return acc;
        },
        [](double a, double b) { return a + b; });
    return total / static_cast<double>(opts.projections);
}

double wasserstein1(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                    const SlicedOptions& opts) {
    require_comparable(mu, nu);
    return mu.dimension() == 1 ? wasserstein1_1d(mu, nu) : wasserstein1_sliced(mu, nu, opts);
}

double product_distance(const Measures& a, const Measures& b, const SlicedOptions& opts) {
    if (a.size() != b.size())
        throw PopulationCountMismatch("product distance needs matching population counts");
    if (a.empty()) throw PopulationCountMismatch("product distance needs at least one population");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += wasserstein1(a[i], b[i], opts);
    return sum;
}

double flow_distance(const MeasureFlow& a, const MeasureFlow& b, const SlicedOptions& opts) {
    a.grid().require_same(b.grid(), "flow distance");
    if (a.population_count() != b.population_count())
        throw PopulationCountMismatch("flow distance needs matching population counts");
    double sup = 0.0;
    for (std::size_t k = 0; k < a.grid().points(); ++k)
        sup = std::max(sup, product_distance(a.at_step(k), b.at_step(k), opts));
    return sup;
}

double holder_modulus(const MeasureFlow& flow, const SlicedOptions& opts) {
    const std::size_t points = flow.grid().points();
    const std::size_t pops = flow.population_count();

    bool all_scalar = true;
    for (std::size_t p = 0; p < pops; ++p)
        if (flow.measure(p, 0).dimension() != 1) all_scalar = false;

    // Scalar populations dominate in practice; pre-sorting every marginal
    // once turns the O(points^2) pair sweep into linear merges.
    std::vector<std::vector<SortedCloud>> sorted;
    if (all_scalar) {
        sorted.assign(pops, std::vector<SortedCloud>(points));
        par::parallel_for(points, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t k = lo; k < hi; ++k)
                for (std::size_t p = 0; p < pops; ++p)
                    sorted[p][k] = sort_coordinate(flow.measure(p, k));
        });
    }

    const std::size_t pairs = points * (points - 1) / 2;
    return par::blocked_reduce(
        pairs, 0.0,
        [&](std::size_t, std::size_t begin, std::size_t end) {
            double best = 0.0;
            for (std::size_t idx = begin; idx < end; ++idx) {
                // idx -> (s, t) with s < t, row-major over the strict upper triangle
                std::size_t s = 0;
                std::size_t offset = idx;
                std::size_t row_len = points - 1;
                while (offset >= row_len) {
                    offset -= row_len;
                    ++s;
                    --row_len;
                }
                const std::size_t t = s + 1 + offset;
                double k_dist = 0.0;
                if (all_scalar) {
                    for (std::size_t p = 0; p < pops; ++p)
                        k_dist += w1_sorted(sorted[p][t], sorted[p][s]);
                } else {
                    k_dist = product_distance(flow.at_step(t), flow.at_step(s), opts);
                }
                const double gap = flow.grid()[t] - flow.grid()[s];
                best = std::max(best, k_dist / std::sqrt(gap));
            }
            return best;
        },
        [](double a, double b) { return std::max(a, b); });
}

}  // namespace mffbsde
