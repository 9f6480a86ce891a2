#include "mffbsde/picard.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "mffbsde/errors.hpp"
#include "mffbsde/girsanov.hpp"
#include "mffbsde/parallel.hpp"
#include "mffbsde/rng.hpp"

namespace mffbsde {

void PsiConfig::validate() const {
    if (n_particles < 2) throw SchemaError("n_particles must be at least 2");
    if (basis_degree < 0) throw SchemaError("basis_degree must be nonnegative");
    if (!(damping > 0.0) || !(damping <= 1.0)) throw SchemaError("damping must lie in (0, 1]");
    if (!(tol >= 0.0)) throw SchemaError("tol must be nonnegative");
    if (max_iter < 1) throw SchemaError("max_iter must be at least 1");
    if (sliced.projections < 1) throw SchemaError("sliced projections must be at least 1");
}

namespace {

double max_field(const std::vector<PopulationResidual>& rows,
                 double PopulationResidual::*field) {
    double v = 0.0;
    for (const auto& r : rows) v = std::max(v, r.*field);
    return v;
}

void require_flow_matches(const PopulationSystem& system, const MeasureFlow& mu,
                          const std::string& context) {
    if (mu.population_count() != system.size())
        throw PopulationCountMismatch(context + ": flow and system population counts differ");
    const Measures& first = mu.at_step(0);
    for (std::size_t i = 0; i < system.size(); ++i) {
        if (first[i].dimension() != system.populations[i].state_dim)
            throw DimensionMismatch(context + ": flow dimension differs from the state space");
    }
}

/// Inverse-CDF draw from a weighted sample cloud. cumulative is empty for
/// uniform measures and ends exactly at 1 otherwise.
std::vector<double> cumulative_weights(const EmpiricalMeasure& m) {
    std::vector<double> cum;
    if (m.is_uniform()) return cum;
    cum.resize(m.size());
    double acc = 0.0;
    for (std::size_t p = 0; p < m.size(); ++p) {
        acc += m.weight(p);
        cum[p] = acc;
    }
    cum.back() = 1.0;
    return cum;
}

std::size_t categorical_index(const EmpiricalMeasure& m, const std::vector<double>& cumulative,
                              double u) {
    const std::size_t n = m.size();
    if (m.is_uniform()) {
        const auto idx = static_cast<std::size_t>(u * static_cast<double>(n));
        return std::min(idx, n - 1);
    }
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    return std::min(static_cast<std::size_t>(it - cumulative.begin()), n - 1);
}

/// Particle-level relaxation: per population and grid point, a
/// damping-fraction of the particle budget is resampled from the map output
/// and the remainder from the carried iterate. Draw j of grid point k at
/// iteration it reads counter (it, k, j) on the mixing stream, so the result
/// does not depend on worker count or evaluation order.
MeasureFlow mix_flows(const MeasureFlow& current, const MeasureFlow& update,
                      const PsiConfig& config, std::size_t iteration) {
    const TimeGrid& grid = current.grid();
    const std::size_t n_pop = current.population_count();
    const std::size_t total = config.n_particles;
    const auto fresh_budget = static_cast<std::size_t>(
        std::llround(config.damping * static_cast<double>(total)));
    // Full replacement takes the map output as is. Resampling it would only
    // add multinomial noise, which would put a floor under the measured rho
    // at an exact fixed point.
    if (fresh_budget >= total) return update;
    std::vector<Measures> steps(grid.points());
    for (std::size_t k = 0; k < grid.points(); ++k) {
        steps[k].reserve(n_pop);
        for (std::size_t i = 0; i < n_pop; ++i) {
            const EmpiricalMeasure& fresh = update.measure(i, k);
            const EmpiricalMeasure& carried = current.measure(i, k);
            const std::vector<double> fresh_cum = cumulative_weights(fresh);
            const std::vector<double> carried_cum = cumulative_weights(carried);
            const std::uint32_t stream =
                rng::stream_id(rng::Stream::Mix, static_cast<std::uint32_t>(i));
            Eigen::MatrixXd samples(static_cast<Eigen::Index>(total), fresh.dimension());
            par::parallel_for(total, [&](std::size_t lo, std::size_t hi) {
                for (std::size_t j = lo; j < hi; ++j) {
                    const double u = rng::uniform(config.seed, stream,
                                                  static_cast<std::uint32_t>(iteration),
                                                  static_cast<std::uint32_t>(k),
                                                  static_cast<std::uint32_t>(j));
                    const bool take_fresh = j < fresh_budget;
                    const EmpiricalMeasure& src = take_fresh ? fresh : carried;
                    const std::size_t row =
                        categorical_index(src, take_fresh ? fresh_cum : carried_cum, u);
                    samples.row(static_cast<Eigen::Index>(j)) =
                        src.samples().row(static_cast<Eigen::Index>(row));
                }
            });
            steps[k].emplace_back(std::move(samples));
        }
    }
    return MeasureFlow(grid, std::move(steps));
}

}  // namespace

double ResidualReport::max_forward() const {
    return max_field(populations, &PopulationResidual::forward);
}
double ResidualReport::max_backward() const {
    return max_field(populations, &PopulationResidual::backward);
}
double ResidualReport::max_terminal() const {
    return max_field(populations, &PopulationResidual::terminal);
}
double ResidualReport::max_marginal() const {
    return max_field(populations, &PopulationResidual::marginal);
}

PsiResult psi_map_detailed(const PopulationSystem& system, const MeasureFlow& mu,
                           const PsiConfig& config) {
    config.validate();
    system.validate();
    require_flow_matches(system, mu, "psi_map");
    const TimeGrid& grid = mu.grid();
    const std::size_t n_pop = system.size();

    PsiResult out;
    out.solutions.resize(n_pop);
    std::vector<std::vector<EmpiricalMeasure>> laws(n_pop);

    // Populations are independent given mu and draw from disjoint counter
    // streams, so this loop is order-free; it runs in index order and the
    // heavy work inside each submodule is already parallel.
    for (std::size_t i = 0; i < n_pop; ++i) {
        const CoefficientBundle& c = system.populations[i];
        FBSDESolution& sol = out.solutions[i];
        PathEnsemble reference =
            simulate_reference(c, system.initial_states[i], grid, config.n_particles,
                               config.seed, static_cast<std::uint32_t>(i));
        const RegressionBasis basis(c.state_dim, config.basis_degree);
        const DriverFn decoupled = [&c](double t, const Eigen::VectorXd& x,
                                        const Eigen::VectorXd& y, const Eigen::MatrixXd& z,
                                        const Measures& ms) {
            return shifted_driver(c, t, x, y, z, ms);
        };
        BackwardSolution fit = solve_bsde(reference, decoupled, c.g, mu, basis);

        laws[i].reserve(grid.points());
        if (config.mode == PsiMode::girsanov) {
            const StateDriftFn tilt = [&grid, &fit, &c, &mu](double t, const Eigen::VectorXd& x) {
                const std::size_t k = grid.index_of(t);
                const Eigen::VectorXd y = fit.evaluate_u(k, x);
                const Eigen::MatrixXd z = fit.evaluate_d(k, x);
                return reduced_drift(c, t, x, y, z, mu.at_step(k));
            };
            const WeightEnsemble weights = doleans_exponential(reference, tilt);
            for (std::size_t k = 0; k < grid.points(); ++k)
                laws[i].push_back(weighted_law(reference, weights, k));
            sol.weights = weights.weights;
            sol.paths = std::move(reference);
        } else {
            const ValueFeedback value = [&fit](std::size_t k, const Eigen::VectorXd& x) {
                return fit.evaluate_u(k, x);
            };
            const GradientFeedback gradient = [&fit](std::size_t k, const Eigen::VectorXd& x) {
                return fit.evaluate_d(k, x);
            };
            PathEnsemble coupled =
                simulate_feedback(c, system.initial_states[i], grid, config.n_particles,
                                  config.seed, value, gradient, mu,
                                  static_cast<std::uint32_t>(i));
            for (std::size_t k = 0; k < grid.points(); ++k)
                laws[i].emplace_back(coupled.states[k]);
            sol.paths = std::move(coupled);
        }
        sol.backward = std::move(fit);
    }

    std::vector<Measures> steps(grid.points());
    for (std::size_t k = 0; k < grid.points(); ++k) {
        steps[k].reserve(n_pop);
        for (std::size_t i = 0; i < n_pop; ++i) steps[k].push_back(std::move(laws[i][k]));
    }
    out.flow = MeasureFlow(grid, std::move(steps));
    return out;
}

MeasureFlow psi_map(const PopulationSystem& system, const MeasureFlow& mu,
                    const PsiConfig& config) {
    return psi_map_detailed(system, mu, config).flow;
}

namespace {

struct DefectSums {
    double forward = 0.0;
    double backward = 0.0;
};

}  // namespace

ResidualReport residual_check(const PopulationSystem& system, const MeasureFlow& flow,
                              const std::vector<FBSDESolution>& solutions,
                              const SlicedOptions& opts) {
    system.validate();
    require_flow_matches(system, flow, "residual_check");
    if (solutions.size() != system.size())
        throw PopulationCountMismatch("residual_check needs one solution per population");
    const TimeGrid& grid = flow.grid();

    ResidualReport report;
    report.populations.resize(solutions.size());
    for (std::size_t i = 0; i < solutions.size(); ++i) {
        const CoefficientBundle& c = system.populations[i];
        const FBSDESolution& sol = solutions[i];
        sol.paths.grid.require_same(grid, "residual_check ensemble");
        sol.backward.grid.require_same(grid, "residual_check surrogate");
        if (sol.paths.state_dim != c.state_dim ||
            sol.backward.value_dim != c.value_dim ||
            sol.backward.noise_dim != c.noise_dim)
            throw DimensionMismatch("residual_check solution dimensions differ from the system");
        const std::size_t n = sol.paths.particles();
        if (n == 0) throw EmptySamples("residual_check needs a nonempty ensemble");
        if (sol.weighted() &&
            (sol.weights.rows() != static_cast<Eigen::Index>(n) ||
             sol.weights.cols() != static_cast<Eigen::Index>(grid.points())))
            throw LengthMismatch("residual_check weight matrix does not match the ensemble");

        PopulationResidual& res = report.populations[i];
        for (std::size_t k = 0; k < grid.steps(); ++k) {
            const double t = grid[k];
            const double dt = grid.dt(k);
            const Measures& ms = flow.at_step(k);
            const DefectSums sums = par::blocked_reduce(
                n, DefectSums{},
                [&](std::size_t, std::size_t lo, std::size_t hi) {
                    DefectSums a;
                    for (std::size_t p = lo; p < hi; ++p) {
                        const Eigen::VectorXd x = sol.paths.state(p, k);
                        const Eigen::VectorXd xn = sol.paths.state(p, k + 1);
                        const Eigen::VectorXd y = sol.backward.evaluate_u(k, x);
                        const Eigen::MatrixXd z = sol.backward.evaluate_d(k, x);
                        const Eigen::VectorXd yn = sol.backward.evaluate_u(k + 1, xn);
                        Eigen::VectorXd dw =
                            sol.paths.increments[k].row(static_cast<Eigen::Index>(p)).transpose();
                        if (sol.weighted()) dw -= reduced_drift(c, t, x, y, z, ms) * dt;
                        const Eigen::VectorXd drift = c.h(t, x) + c.b(t, x, y, z, ms);
                        const Eigen::VectorXd fwd =
                            xn - euler_step(x, drift, c.sigma(t, x), dt, dw);
                        const Eigen::VectorXd bwd = yn - y + c.f(t, x, y, z, ms) * dt - z * dw;
                        a.forward += fwd.squaredNorm();
                        a.backward += bwd.squaredNorm();
                    }
                    return a;
                },
                [](DefectSums acc, const DefectSums& part) {
                    acc.forward += part.forward;
                    acc.backward += part.backward;
                    return acc;
                });
            res.forward = std::max(res.forward, std::sqrt(sums.forward / static_cast<double>(n)));
            res.backward =
                std::max(res.backward, std::sqrt(sums.backward / static_cast<double>(n)));
        }

        const std::size_t last = grid.steps();
        const Measures& terminal_ms = flow.at_step(last);
        res.terminal = par::blocked_reduce(
            n, 0.0,
            [&](std::size_t, std::size_t lo, std::size_t hi) {
                double worst = 0.0;
                for (std::size_t p = lo; p < hi; ++p) {
                    const Eigen::VectorXd x = sol.paths.state(p, last);
                    const Eigen::VectorXd gap =
                        sol.backward.evaluate_u(last, x) - c.g(x, terminal_ms);
                    worst = std::max(worst, gap.cwiseAbs().maxCoeff());
                }
                return worst;
            },
            [](double acc, double part) { return std::max(acc, part); });

        for (std::size_t k = 0; k < grid.points(); ++k) {
            const EmpiricalMeasure law =
                sol.weighted()
                    ? EmpiricalMeasure(sol.paths.states[k],
                                       sol.weights.col(static_cast<Eigen::Index>(k)))
                    : EmpiricalMeasure(sol.paths.states[k]);
            res.marginal = std::max(res.marginal, wasserstein1(flow.measure(i, k), law, opts));
        }
    }
    return report;
}

FixedPointReport iterate(const PopulationSystem& system, const MeasureFlow& mu0,
                         const PsiConfig& config) {
    config.validate();
    system.validate();
    require_flow_matches(system, mu0, "iterate");

    FixedPointReport report;
    MeasureFlow mu = mu0;
    PsiResult image;
    for (std::size_t it = 0; it < config.max_iter; ++it) {
        image = psi_map_detailed(system, mu, config);
        const double rho = flow_distance(mu, image.flow, config.sliced);
        report.iterates.push_back(summarize(mu));
        report.rho_history.push_back(rho);
        // tol = 0 forces a full max_iter run even when the map lands exactly
        // on a fixed point, so a zero threshold can never report convergence.
        if (config.tol > 0.0 && rho <= config.tol) {
            report.converged = true;
            break;
        }
        if (it + 1 == config.max_iter) {
            report.hit_max_iter = true;
            break;
        }
        mu = mix_flows(mu, image.flow, config, it);
    }
    report.flow = std::move(mu);
    report.residual = residual_check(system, report.flow, image.solutions, config.sliced);
    report.holder = holder_modulus(report.flow, config.sliced);
    return report;
}

MultiStartResult multi_start(const PopulationSystem& system,
                             const std::vector<MeasureFlow>& inits, const PsiConfig& config) {
    if (inits.size() < 2) throw LengthMismatch("multi_start needs at least two initial flows");
    MultiStartResult out;
    out.reports.reserve(inits.size());
    for (const MeasureFlow& mu0 : inits) out.reports.push_back(iterate(system, mu0, config));

    const auto n = inits.size();
    out.pairwise_rho = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                             static_cast<Eigen::Index>(n));
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) {
            const double d =
                flow_distance(out.reports[a].flow, out.reports[b].flow, config.sliced);
            out.pairwise_rho(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = d;
            out.pairwise_rho(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = d;
        }
    }

    // single-linkage clusters over converged runs at 3x tol
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    const auto find = [&parent](std::size_t a) {
        while (parent[a] != a) {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        return a;
    };
    const double threshold = 3.0 * config.tol;
    for (std::size_t a = 0; a < n; ++a) {
        if (!out.reports[a].converged) continue;
        for (std::size_t b = a + 1; b < n; ++b) {
            if (!out.reports[b].converged) continue;
            if (out.pairwise_rho(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) <=
                threshold)
                parent[find(a)] = find(b);
        }
    }
    out.cluster_of.assign(n, -1);
    std::vector<int> label(n, -1);
    std::size_t next_id = 0;
    for (std::size_t a = 0; a < n; ++a) {
        if (!out.reports[a].converged) continue;
        const std::size_t root = find(a);
        if (label[root] < 0) label[root] = static_cast<int>(next_id++);
        out.cluster_of[a] = label[root];
    }
    out.cluster_count = next_id;

    const bool all_converged =
        std::all_of(out.reports.begin(), out.reports.end(),
                    [](const FixedPointReport& r) { return r.converged; });
    if (out.cluster_count >= 2)
        out.verdict = ClusterVerdict::multiple_fixed_points;
    else if (out.cluster_count == 1 && all_converged)
        out.verdict = ClusterVerdict::unique_candidate;
    else
        out.verdict = ClusterVerdict::inconclusive;
    return out;
}

}  // namespace mffbsde
