#include "mffbsde/coefficients.hpp"

#include <algorithm>
#include <cmath>

#include "mffbsde/errors.hpp"
#include "mffbsde/rng.hpp"

namespace mffbsde {

namespace {

constexpr double kSingularFloor = 1e-12;

Eigen::VectorXd random_unit(int dim, std::uint64_t seed, std::uint32_t pop, std::uint32_t index) {
    Eigen::VectorXd u(dim);
    for (std::uint32_t attempt = 0; attempt < 8; ++attempt) {
        rng::fill_normals(seed, rng::stream_id(rng::Stream::Validate, pop), index, attempt,
                          {u.data(), static_cast<std::size_t>(dim)});
        const double norm = u.norm();
        if (norm > 1e-12) return u / norm;
    }
    u.setZero();
    u[0] = 1.0;
    return u;
}

}  // namespace

void PopulationSystem::validate() const {
    if (populations.empty())
        throw PopulationCountMismatch("system needs at least one population");
    if (initial_states.size() != populations.size())
        throw PopulationCountMismatch("one initial state per population required");
    for (std::size_t i = 0; i < populations.size(); ++i) {
        const auto& c = populations[i];
        if (c.state_dim < 1 || c.value_dim < 1 || c.noise_dim < 1)
            throw DimensionMismatch("population dimensions must be positive");
        if (!c.h || !c.b || !c.sigma || !c.f || !c.g)
            throw DimensionMismatch("population " + std::to_string(i) +
                                    " is missing a coefficient function");
        if (initial_states[i].size() != c.state_dim)
            throw DimensionMismatch("initial state dimension mismatch for population " +
                                    std::to_string(i));
    }
}

Eigen::VectorXd reduced_drift(const CoefficientBundle& c, double t, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& y, const Eigen::MatrixXd& z,
                              const Measures& measures) {
    const Eigen::VectorXd drift = c.b(t, x, y, z, measures);
    if (c.state_dim == 1 && c.noise_dim == 1) {
        const double s = c.sigma(t, x)(0, 0);
        if (!(s * s > kSingularFloor))
            throw SingularDiffusion("diffusion vanishes at t=" + std::to_string(t));
        return Eigen::VectorXd::Constant(1, drift[0] / s);
    }
    const Eigen::MatrixXd sig = c.sigma(t, x);
    if (sig.rows() != c.state_dim || sig.cols() != c.noise_dim)
        throw DimensionMismatch("sigma returned a matrix of the wrong shape");
    const Eigen::MatrixXd a = sig * sig.transpose();
    const Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success)
        throw SingularDiffusion("sigma sigma' is not positive definite at t=" + std::to_string(t));
    const Eigen::VectorXd diag = llt.matrixL().toDenseMatrix().diagonal();
    const double dmin = diag.minCoeff();
    const double dmax = diag.maxCoeff();
    if (dmin * dmin <= kSingularFloor * std::max(1.0, dmax * dmax))
        throw SingularDiffusion("sigma sigma' is numerically singular at t=" + std::to_string(t));
    return sig.transpose() * llt.solve(drift);
}

Eigen::VectorXd shifted_driver(const CoefficientBundle& c, double t, const Eigen::VectorXd& x,
                               const Eigen::VectorXd& y, const Eigen::MatrixXd& z,
                               const Measures& measures) {
    return c.f(t, x, y, z, measures) + z * reduced_drift(c, t, x, y, z, measures);
}

ProbeSpec ProbeSpec::defaults(const TimeGrid& grid) {
    ProbeSpec spec;
    const double T = grid.horizon();
    spec.times = {0.0, 0.25 * T, 0.5 * T, 0.75 * T, T};
    return spec;
}

bool ValidationReport::all_passed() const {
    return std::all_of(entries.begin(), entries.end(),
                       [](const ValidationEntry& e) { return e.passed; });
}

namespace {

struct ProbePoints {
    std::vector<Eigen::VectorXd> states;
    std::vector<Eigen::VectorXd> values;
    std::vector<Eigen::MatrixXd> gradients;
};

ProbePoints build_probe_points(const CoefficientBundle& c, const Eigen::VectorXd& x0,
                               const ProbeSpec& spec, std::uint32_t pop) {
    ProbePoints p;
    std::uint32_t draw = 0;
    for (double offset : spec.state_offsets) {
        const Eigen::VectorXd dir = random_unit(c.state_dim, spec.seed, pop, 1000 + draw++);
        p.states.push_back(x0 + offset * dir);
    }
    for (double level : spec.value_levels) {
        const Eigen::VectorXd dir = random_unit(c.value_dim, spec.seed, pop, 2000 + draw++);
        p.values.push_back(level * dir);
    }
    for (double level : spec.gradient_levels) {
        Eigen::MatrixXd zdir(c.value_dim, c.noise_dim);
        Eigen::VectorXd flat =
            random_unit(c.value_dim * c.noise_dim, spec.seed, pop, 3000 + draw++);
        for (int r = 0; r < c.value_dim; ++r)
            for (int col = 0; col < c.noise_dim; ++col) zdir(r, col) = flat[r * c.noise_dim + col];
        p.gradients.push_back(level * zdir);
    }
    return p;
}

Measures build_probe_measures(const PopulationSystem& system, const ProbeSpec& spec) {
    Measures out;
    for (std::size_t j = 0; j < system.size(); ++j) {
        const int dim = system.populations[j].state_dim;
        Eigen::MatrixXd samples(spec.measure_samples, dim);
        for (int i = 0; i < spec.measure_samples; ++i) {
            Eigen::VectorXd row(dim);
            rng::fill_normals(spec.seed, rng::stream_id(rng::Stream::Validate, 4096 + j),
                              static_cast<std::uint32_t>(i), 0,
                              {row.data(), static_cast<std::size_t>(dim)});
            samples.row(i) = (system.initial_states[j] + row).transpose();
        }
        out.emplace_back(std::move(samples));
    }
    return out;
}

Measures jitter_measures(const Measures& base, double amplitude, std::uint64_t seed) {
    Measures out;
    for (std::size_t j = 0; j < base.size(); ++j) {
        Eigen::MatrixXd samples = base[j].samples();
        for (Eigen::Index i = 0; i < samples.rows(); ++i) {
            Eigen::VectorXd noise(samples.cols());
            rng::fill_normals(seed, rng::stream_id(rng::Stream::Validate, 8192 + j),
                              static_cast<std::uint32_t>(i), 1,
                              {noise.data(), static_cast<std::size_t>(samples.cols())});
            samples.row(i) += amplitude * noise.transpose();
        }
        out.emplace_back(std::move(samples));
    }
    return out;
}

}  // namespace

ValidationReport validate_assumptions(const PopulationSystem& system, const ProbeSpec& spec) {
    system.validate();
    ValidationReport report;
    const Measures probe_measures = build_probe_measures(system, spec);
    const double slack = 1e-9;

    for (std::size_t i = 0; i < system.size(); ++i) {
        const auto& c = system.populations[i];
        const auto pop = static_cast<std::uint32_t>(i);
        const ProbePoints probes = build_probe_points(c, system.initial_states[i], spec, pop);

        // (a) two-sided ellipticity of sigma sigma'
        {
            double worst_low = 1e300, worst_high = 0.0;
            for (double t : spec.times) {
                for (const auto& x : probes.states) {
                    const Eigen::MatrixXd a = c.sigma(t, x) * c.sigma(t, x).transpose();
                    for (int k = 0; k < spec.directions; ++k) {
                        const Eigen::VectorXd v =
                            random_unit(c.state_dim, spec.seed, pop, 5000 + k);
                        const double q = v.dot(a * v);
                        worst_low = std::min(worst_low, q);
                        worst_high = std::max(worst_high, q);
                    }
                }
            }
            const bool ok = worst_low + slack >= 1.0 / c.ellipticity &&
                            worst_high <= c.ellipticity + slack;
            report.entries.push_back({"ellipticity", i, ok,
                                      ok ? worst_high : (worst_low + slack < 1.0 / c.ellipticity
                                                             ? worst_low
                                                             : worst_high),
                                      c.ellipticity,
                                      "quadratic form range [" + std::to_string(worst_low) + ", " +
                                          std::to_string(worst_high) + "]"});
        }

        // (b) coupling drift stays bounded
        {
            double worst = 0.0;
            for (double t : spec.times)
                for (const auto& x : probes.states)
                    for (const auto& y : probes.values)
                        for (const auto& z : probes.gradients)
                            worst = std::max(
                                worst, c.b(t, x, y, z, probe_measures).lpNorm<Eigen::Infinity>());
            report.entries.push_back({"drift_bound", i, worst <= c.growth_constant + slack, worst,
                                      c.growth_constant, "sup |b| over probe points"});
        }

        // (c) growth of f and g
        {
            double worst_margin = -1e300;
            double worst_value = 0.0;
            for (const auto& x : probes.states) {
                const double cap =
                    c.growth_constant * (1.0 + std::pow(x.norm(), c.growth_exponent));
                const double val = c.g(x, probe_measures).lpNorm<Eigen::Infinity>();
                if (val - cap > worst_margin) {
                    worst_margin = val - cap;
                    worst_value = val;
                }
            }
            report.entries.push_back({"terminal_growth", i, worst_margin <= slack, worst_value,
                                      0.0, "|g| against C (1 + |x|^r)"});

            worst_margin = -1e300;
            worst_value = 0.0;
            for (double t : spec.times)
                for (const auto& x : probes.states)
                    for (const auto& y : probes.values)
                        for (const auto& z : probes.gradients) {
                            const double cap =
                                c.growth_constant * (1.0 + std::pow(x.norm(), c.growth_exponent) +
                                                     y.norm() + z.norm());
                            const double val =
                                c.f(t, x, y, z, probe_measures).lpNorm<Eigen::Infinity>();
                            if (val - cap > worst_margin) {
                                worst_margin = val - cap;
                                worst_value = val;
                            }
                        }
            report.entries.push_back({"driver_growth", i, worst_margin <= slack, worst_value, 0.0,
                                      "|f| against C (1 + |x|^r + |y| + |z|)"});
        }

        // (d) continuity in the measure argument: outputs settle as jitter
        // shrinks geometrically. Sampled falsifier only.
        {
            const double t = spec.times.empty() ? 0.0 : spec.times.front();
            const auto& x = probes.states.front();
            const auto& y = probes.values.front();
            const auto& z = probes.gradients.front();
            auto deviation = [&](const Measures& jittered) {
                double d = 0.0;
                d = std::max(d, (c.b(t, x, y, z, jittered) - c.b(t, x, y, z, probe_measures))
                                    .lpNorm<Eigen::Infinity>());
                d = std::max(d, (c.f(t, x, y, z, jittered) - c.f(t, x, y, z, probe_measures))
                                    .lpNorm<Eigen::Infinity>());
                d = std::max(d, (c.g(x, jittered) - c.g(x, probe_measures))
                                    .lpNorm<Eigen::Infinity>());
                return d;
            };
            double first = 0.0, last = 0.0;
            for (int level = 0; level < spec.jitter_levels; ++level) {
                const double amplitude = spec.jitter_scale * std::pow(0.5, level);
                const double d = deviation(jitter_measures(probe_measures, amplitude, spec.seed));
                if (level == 0) first = d;
                last = d;
            }
            const bool ok = last <= std::max(1e-8, 0.5 * first);
            report.entries.push_back({"measure_continuity", i, ok, last,
                                      std::max(1e-8, 0.5 * first),
                                      "residual deviation after shrinking jitter"});
        }
    }
    return report;
}

}  // namespace mffbsde
