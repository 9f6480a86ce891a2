#include "mffbsde/mfg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <utility>

#include "mffbsde/errors.hpp"
#include "mffbsde/parallel.hpp"
#include "mffbsde/rng.hpp"

namespace mffbsde {

void ControlSet::validate() const {
    if (lower.size() != upper.size())
        throw DimensionMismatch("control set bounds differ in length");
    if (lower.size() == 0) throw SchemaError("control set is empty");
    if (!lower.allFinite() || !upper.allFinite())
        throw SchemaError("control set bounds must be finite");
    for (Eigen::Index j = 0; j < lower.size(); ++j)
        if (lower[j] > upper[j])
            throw SchemaError("control set lower bound exceeds upper bound at coordinate " +
                              std::to_string(j));
}

bool ControlSet::contains(const Eigen::VectorXd& a, double slack) const {
    if (a.size() != lower.size())
        throw DimensionMismatch("control length does not match the control set");
    for (Eigen::Index j = 0; j < a.size(); ++j)
        if (a[j] < lower[j] - slack || a[j] > upper[j] + slack) return false;
    return true;
}

Eigen::VectorXd ControlSet::project(const Eigen::VectorXd& a) const {
    if (a.size() != lower.size())
        throw DimensionMismatch("control length does not match the control set");
    return a.cwiseMax(lower).cwiseMin(upper);
}

void GameSpec::validate() const {
    if (populations.empty()) throw SchemaError("game has no populations");
    if (initial_states.size() != populations.size())
        throw PopulationCountMismatch("one initial state per population is required");
    for (std::size_t i = 0; i < populations.size(); ++i) {
        const GamePopulation& pop = populations[i];
        const std::string label = "population " + std::to_string(i);
        if (pop.state_dim < 1 || pop.noise_dim < 1)
            throw SchemaError(label + ": dimensions must be positive");
        if (!pop.b) throw SchemaError(label + ": controlled drift is required");
        if (!pop.sigma) throw SchemaError(label + ": diffusion is required");
        if (!pop.f) throw SchemaError(label + ": running cost is required");
        if (!pop.g) throw SchemaError(label + ": terminal cost is required");
        pop.controls.validate();
        if (!(pop.fd_step > 0.0) || !std::isfinite(pop.fd_step))
            throw SchemaError(label + ": finite difference step must be positive");
        if (!(pop.convexity > 0.0))
            throw SchemaError(label + ": declared convexity must be positive");
        if (initial_states[i].size() != pop.state_dim)
            throw DimensionMismatch(label + ": initial state dimension mismatch");
    }
}

namespace {

Eigen::VectorXd zero_vector(int dim) { return Eigen::VectorXd::Zero(dim); }

/// d f / d x, hook or central differences. The state space is unconstrained
/// so the stencil is always symmetric.
Eigen::VectorXd cost_state_gradient(const GamePopulation& pop, double t, const Eigen::VectorXd& x,
                                    const Measures& m, const Eigen::VectorXd& a) {
    if (pop.df_dx) return pop.df_dx(t, x, m, a);
    if (!pop.allow_finite_difference)
        throw MissingGradient("running cost state gradient: no hook and differencing disabled");
    const double h = pop.fd_step;
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd probe = x;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double base = x[j];
        probe[j] = base + h;
        const double fp = pop.f(t, probe, m, a);
        probe[j] = base - h;
        const double fm = pop.f(t, probe, m, a);
        probe[j] = base;
        g[j] = (fp - fm) / (2.0 * h);
    }
    return g;
}

Eigen::MatrixXd drift_state_jacobian(const GamePopulation& pop, double t, const Eigen::VectorXd& x,
                                     const Measures& m, const Eigen::VectorXd& a) {
    if (pop.db_dx) return pop.db_dx(t, x, m, a);
    if (!pop.allow_finite_difference)
        throw MissingGradient("drift state Jacobian: no hook and differencing disabled");
    const double h = pop.fd_step;
    Eigen::MatrixXd jac(pop.state_dim, x.size());
    Eigen::VectorXd probe = x;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double base = x[j];
        probe[j] = base + h;
        const Eigen::VectorXd bp = pop.b(t, probe, m, a);
        probe[j] = base - h;
        const Eigen::VectorXd bm = pop.b(t, probe, m, a);
        probe[j] = base;
        jac.col(j) = (bp - bm) / (2.0 * h);
    }
    return jac;
}

Eigen::VectorXd terminal_gradient(const GamePopulation& pop, const Eigen::VectorXd& x,
                                  const Measures& m) {
    if (pop.dg_dx) return pop.dg_dx(x, m);
    if (!pop.allow_finite_difference)
        throw MissingGradient("terminal cost gradient: no hook and differencing disabled");
    const double h = pop.fd_step;
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd probe = x;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double base = x[j];
        probe[j] = base + h;
        const double gp = pop.g(probe, m);
        probe[j] = base - h;
        const double gm = pop.g(probe, m);
        probe[j] = base;
        g[j] = (gp - gm) / (2.0 * h);
    }
    return g;
}

/// Control-space stencil that never leaves the box: symmetric in the
/// interior, one-sided against an active bound, zero width on a pinned
/// coordinate.
struct Stencil {
    double hi = 0.0;
    double lo = 0.0;
    bool degenerate() const { return !(hi > lo); }
};

Stencil control_stencil(const ControlSet& box, const Eigen::VectorXd& a, Eigen::Index j,
                        double h) {
    Stencil s;
    s.hi = std::min(a[j] + h, box.upper[j]);
    s.lo = std::max(a[j] - h, box.lower[j]);
    return s;
}

Eigen::VectorXd cost_control_gradient(const GamePopulation& pop, double t,
                                      const Eigen::VectorXd& x, const Measures& m,
                                      const Eigen::VectorXd& a) {
    if (pop.df_da) return pop.df_da(t, x, m, a);
    if (!pop.allow_finite_difference)
        throw MissingGradient("running cost control gradient: no hook and differencing disabled");
    Eigen::VectorXd g(a.size());
    Eigen::VectorXd probe = a;
    for (Eigen::Index j = 0; j < a.size(); ++j) {
        const Stencil s = control_stencil(pop.controls, a, j, pop.fd_step);
        if (s.degenerate()) {
            g[j] = 0.0;
            continue;
        }
        const double base = a[j];
        probe[j] = s.hi;
        const double fp = pop.f(t, x, m, probe);
        probe[j] = s.lo;
        const double fm = pop.f(t, x, m, probe);
        probe[j] = base;
        g[j] = (fp - fm) / (s.hi - s.lo);
    }
    return g;
}

Eigen::MatrixXd drift_control_jacobian(const GamePopulation& pop, double t,
                                       const Eigen::VectorXd& x, const Measures& m,
                                       const Eigen::VectorXd& a) {
    if (pop.db_da) return pop.db_da(t, x, m, a);
    if (!pop.allow_finite_difference)
        throw MissingGradient("drift control Jacobian: no hook and differencing disabled");
    Eigen::MatrixXd jac(pop.state_dim, a.size());
    Eigen::VectorXd probe = a;
    for (Eigen::Index j = 0; j < a.size(); ++j) {
        const Stencil s = control_stencil(pop.controls, a, j, pop.fd_step);
        if (s.degenerate()) {
            jac.col(j).setZero();
            continue;
        }
        const double base = a[j];
        probe[j] = s.hi;
        const Eigen::VectorXd bp = pop.b(t, x, m, probe);
        probe[j] = s.lo;
        const Eigen::VectorXd bm = pop.b(t, x, m, probe);
        probe[j] = base;
        jac.col(j) = (bp - bm) / (s.hi - s.lo);
    }
    return jac;
}

/// d H / d a with the state and measure frozen.
Eigen::VectorXd hamiltonian_control_gradient(const GamePopulation& pop, double t,
                                             const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                             const Measures& m, const Eigen::VectorXd& a) {
    const Eigen::MatrixXd jac = drift_control_jacobian(pop, t, x, m, a);
    return jac.transpose() * y + cost_control_gradient(pop, t, x, m, a);
}

}  // namespace

double hamiltonian(const GamePopulation& pop, double t, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& y, const Measures& m, const Eigen::VectorXd& a) {
    if (y.size() != pop.state_dim)
        throw DimensionMismatch("adjoint length does not match the state dimension");
    if (!pop.controls.contains(a))
        throw ControlOutOfSet("control outside the admissible box");
    return pop.b(t, x, m, a).dot(y) + pop.f(t, x, m, a);
}

Eigen::VectorXd minimize_hamiltonian(const GamePopulation& pop, double t,
                                     const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                     const Measures& m) {
    pop.controls.validate();
    if (y.size() != pop.state_dim)
        throw DimensionMismatch("adjoint length does not match the state dimension");
    if (pop.minimizer) return pop.controls.project(pop.minimizer(t, x, y, m));

    constexpr double kTol = 1e-8;
    constexpr int kMaxSteps = 100;
    const ControlSet& box = pop.controls;
    const Eigen::Index dim = box.dimension();
    Eigen::VectorXd a = box.project(0.5 * (box.lower + box.upper));

    auto optimality = [&](const Eigen::VectorXd& point, const Eigen::VectorXd& grad) {
        return (point - box.project(point - grad)).lpNorm<Eigen::Infinity>();
    };

    for (int step = 0; step < kMaxSteps; ++step) {
        const Eigen::VectorXd grad = hamiltonian_control_gradient(pop, t, x, y, m, a);
        if (optimality(a, grad) <= kTol) return a;

        // curvature from differenced gradients, symmetrized; falls back to
        // the plain gradient when the model is not positive definite
        Eigen::MatrixXd curv(dim, dim);
        Eigen::VectorXd probe = a;
        for (Eigen::Index j = 0; j < dim; ++j) {
            const Stencil s = control_stencil(box, a, j, pop.fd_step);
            if (s.degenerate()) {
                curv.col(j).setZero();
                continue;
            }
            const double base = a[j];
            probe[j] = s.hi;
            const Eigen::VectorXd gp = hamiltonian_control_gradient(pop, t, x, y, m, probe);
            probe[j] = s.lo;
            const Eigen::VectorXd gm = hamiltonian_control_gradient(pop, t, x, y, m, probe);
            probe[j] = base;
            curv.col(j) = (gp - gm) / (s.hi - s.lo);
        }
        curv = (0.5 * (curv + curv.transpose())).eval();

        Eigen::VectorXd direction = -grad;
        const Eigen::LDLT<Eigen::MatrixXd> ldlt(curv);
        if (ldlt.info() == Eigen::Success && ldlt.vectorD().minCoeff() > 1e-12)
            direction = -ldlt.solve(grad);

        const double here = hamiltonian(pop, t, x, y, m, a);
        bool moved = false;
        double scale = 1.0;
        for (int trial = 0; trial < 40 && !moved; ++trial) {
            const Eigen::VectorXd cand = box.project(a + scale * direction);
            if ((cand - a).lpNorm<Eigen::Infinity>() == 0.0) break;
            if (hamiltonian(pop, t, x, y, m, cand) < here) {
                a = cand;
                moved = true;
            }
            scale *= 0.5;
        }
        if (!moved) {
            scale = 1.0;
            for (int trial = 0; trial < 40 && !moved; ++trial) {
                const Eigen::VectorXd cand = box.project(a - scale * grad);
                if ((cand - a).lpNorm<Eigen::Infinity>() == 0.0) break;
                if (hamiltonian(pop, t, x, y, m, cand) < here) {
                    a = cand;
                    moved = true;
                }
                scale *= 0.5;
            }
        }
        if (!moved) break;
    }

    const Eigen::VectorXd grad = hamiltonian_control_gradient(pop, t, x, y, m, a);
    if (optimality(a, grad) <= kTol) return a;
    throw NonConvergence("Hamiltonian minimization stalled above the projected gradient tolerance");
}

DriverMaximum maximize_shifted_driver(const GamePopulation& pop, double t,
                                      const Eigen::VectorXd& x, const Measures& m,
                                      const Eigen::VectorXd& z, int grid_resolution) {
    pop.controls.validate();
    if (grid_resolution < 2) throw SchemaError("grid resolution must be at least 2 per coordinate");
    if (z.size() != pop.noise_dim)
        throw DimensionMismatch("z length does not match the noise dimension");

    // bundle view of the controlled drift so the reduction below shares the
    // same pseudo-inverse as the decoupling step
    const Eigen::VectorXd zero_y = zero_vector(1);
    const Eigen::MatrixXd zero_z = Eigen::MatrixXd::Zero(1, 1);
    Eigen::VectorXd slot;
    CoefficientBundle view;
    view.state_dim = pop.state_dim;
    view.value_dim = 1;
    view.noise_dim = pop.noise_dim;
    view.sigma = pop.sigma;
    view.b = [&pop, &slot](double tt, const Eigen::VectorXd& xx, const Eigen::VectorXd&,
                           const Eigen::MatrixXd&, const Measures& mm) -> Eigen::VectorXd {
        return pop.b(tt, xx, mm, slot);
    };
    auto shifted = [&](const Eigen::VectorXd& a) {
        slot = a;
        return pop.f(t, x, m, a) + z.dot(reduced_drift(view, t, x, zero_y, zero_z, m));
    };

    const ControlSet& box = pop.controls;
    const Eigen::Index dim = box.dimension();
    const int res = grid_resolution;

    // lexicographic tensor walk; strictly-greater updates keep the
    // lexicographically smallest among tied maximizers
    std::vector<int> idx(static_cast<std::size_t>(dim), 0);
    Eigen::VectorXd node(dim);
    Eigen::VectorXd best = box.lower;
    double best_value = -std::numeric_limits<double>::infinity();
    bool done = false;
    while (!done) {
        for (Eigen::Index j = 0; j < dim; ++j)
            node[j] = box.lower[j] + (box.upper[j] - box.lower[j]) *
                                         (static_cast<double>(idx[static_cast<std::size_t>(j)]) /
                                          static_cast<double>(res - 1));
        const double value = shifted(node);
        if (value > best_value) {
            best_value = value;
            best = node;
        }
        Eigen::Index j = dim - 1;
        while (true) {
            if (++idx[static_cast<std::size_t>(j)] < res) break;
            idx[static_cast<std::size_t>(j)] = 0;
            if (j == 0) {
                done = true;
                break;
            }
            --j;
        }
    }

    // one polish pass: adaptive projected gradient ascent from the best node
    double cell = 0.0;
    for (Eigen::Index j = 0; j < dim; ++j)
        cell = std::max(cell, (box.upper[j] - box.lower[j]) / static_cast<double>(res - 1));
    double step = std::max(cell, 1e-3);
    Eigen::VectorXd cur = best;
    double val = best_value;
    for (int it = 0; it < 200 && step > 1e-12; ++it) {
        Eigen::VectorXd grad(dim);
        Eigen::VectorXd probe = cur;
        for (Eigen::Index j = 0; j < dim; ++j) {
            const double width = box.upper[j] - box.lower[j];
            const Stencil s = control_stencil(box, cur, j, std::max(1e-7, 1e-7 * width));
            if (s.degenerate()) {
                grad[j] = 0.0;
                continue;
            }
            const double base = cur[j];
            probe[j] = s.hi;
            const double fp = shifted(probe);
            probe[j] = s.lo;
            const double fm = shifted(probe);
            probe[j] = base;
            grad[j] = (fp - fm) / (s.hi - s.lo);
        }
        const Eigen::VectorXd cand = box.project(cur + step * grad);
        const double cv = shifted(cand);
        if (cv > val) {
            cur = cand;
            val = cv;
            step *= 1.6;
        } else {
            step *= 0.5;
        }
    }
    return {cur, val};
}

PopulationSystem assemble_pontryagin(const GameSpec& game) {
    game.validate();
    PopulationSystem system;
    system.initial_states = game.initial_states;
    for (std::size_t i = 0; i < game.populations.size(); ++i) {
        const auto pop = std::make_shared<const GamePopulation>(game.populations[i]);
        const std::string label = "population " + std::to_string(i);
        if (!pop->allow_finite_difference) {
            if (!pop->db_dx)
                throw MissingGradient(label + ": drift state Jacobian hook is required");
            if (!pop->df_dx)
                throw MissingGradient(label + ": running cost state gradient hook is required");
            if (!pop->dg_dx)
                throw MissingGradient(label + ": terminal cost gradient hook is required");
            if (!pop->minimizer && (!pop->db_da || !pop->df_da))
                throw MissingGradient(label +
                                      ": control gradient hooks are required for the best response");
        }

        CoefficientBundle c;
        c.state_dim = pop->state_dim;
        c.value_dim = pop->state_dim;  // the adjoint rides in the state space
        c.noise_dim = pop->noise_dim;
        c.growth_constant = pop->growth_constant;
        c.growth_exponent = pop->growth_exponent;
        c.ellipticity = pop->ellipticity;
        c.h = pop->h ? pop->h
                     : StateDriftFn([dim = pop->state_dim](double, const Eigen::VectorXd&)
                                        -> Eigen::VectorXd { return zero_vector(dim); });
        c.sigma = pop->sigma;
        c.b = [pop](double t, const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                    const Eigen::MatrixXd&, const Measures& ms) -> Eigen::VectorXd {
            return pop->b(t, x, ms, minimize_hamiltonian(*pop, t, x, y, ms));
        };
        c.f = [pop](double t, const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                    const Eigen::MatrixXd&, const Measures& ms) -> Eigen::VectorXd {
            // d/dx of b . y + f with the best response held fixed
            const Eigen::VectorXd a = minimize_hamiltonian(*pop, t, x, y, ms);
            const Eigen::MatrixXd jac = drift_state_jacobian(*pop, t, x, ms, a);
            return jac.transpose() * y + cost_state_gradient(*pop, t, x, ms, a);
        };
        c.g = [pop](const Eigen::VectorXd& x, const Measures& ms) -> Eigen::VectorXd {
            return terminal_gradient(*pop, x, ms);
        };
        system.populations.push_back(std::move(c));
    }
    return system;
}

CostEstimate estimate_cost(const GameSpec& game, std::size_t pop_index,
                           const ControlFeedback& control, const MeasureFlow& flow,
                           std::size_t n_particles, std::uint64_t seed) {
    game.validate();
    if (pop_index >= game.size()) throw IndexOutOfRange("population index out of range");
    if (!control) throw SchemaError("control closure is empty");
    if (n_particles < 2) throw SchemaError("cost estimation needs at least two particles");
    if (flow.population_count() != game.size())
        throw PopulationCountMismatch("flow does not cover every population");

    const GamePopulation& pop = game.populations[pop_index];
    const TimeGrid& grid = flow.grid();

    auto admissible = [&pop, &control](double t, const Eigen::VectorXd& x) {
        Eigen::VectorXd a = control(t, x);
        if (a.size() != pop.controls.dimension())
            throw DimensionMismatch("control feedback dimension mismatch");
        if (!pop.controls.contains(a))
            throw ControlOutOfSet("control feedback left the admissible box at t = " +
                                  std::to_string(t));
        return a;
    };

    CoefficientBundle controlled;
    controlled.state_dim = pop.state_dim;
    controlled.value_dim = 1;
    controlled.noise_dim = pop.noise_dim;
    controlled.h = pop.h ? pop.h
                         : StateDriftFn([dim = pop.state_dim](double, const Eigen::VectorXd&)
                                            -> Eigen::VectorXd { return zero_vector(dim); });
    controlled.sigma = pop.sigma;
    controlled.b = [&pop, &admissible](double t, const Eigen::VectorXd& x, const Eigen::VectorXd&,
                                       const Eigen::MatrixXd&,
                                       const Measures& ms) -> Eigen::VectorXd {
        return pop.b(t, x, ms, admissible(t, x));
    };
    const ValueFeedback zero_value = [](std::size_t, const Eigen::VectorXd&) -> Eigen::VectorXd {
        return Eigen::VectorXd::Zero(1);
    };
    const GradientFeedback zero_gradient =
        [d = pop.noise_dim](std::size_t, const Eigen::VectorXd&) -> Eigen::MatrixXd {
        return Eigen::MatrixXd::Zero(1, d);
    };
    const PathEnsemble paths =
        simulate_feedback(controlled, game.initial_states[pop_index], grid, n_particles, seed,
                          zero_value, zero_gradient, flow, static_cast<std::uint32_t>(pop_index));

    // left-endpoint quadrature of the running cost plus the terminal cost
    struct Sums {
        double sum = 0.0;
        double sumsq = 0.0;
    };
    const std::size_t steps = grid.steps();
    const Sums total = par::blocked_reduce(
        n_particles, Sums{},
        [&](std::size_t, std::size_t begin, std::size_t end) {
            Sums s;
            for (std::size_t p = begin; p < end; ++p) {
                double cost = 0.0;
                for (std::size_t k = 0; k < steps; ++k) {
                    const double t = grid[k];
                    const Eigen::VectorXd x = paths.state(p, k);
                    cost += pop.f(t, x, flow.at_step(k), admissible(t, x)) * grid.dt(k);
                }
                cost += pop.g(paths.state(p, steps), flow.at_step(steps));
                s.sum += cost;
                s.sumsq += cost * cost;
            }
            return s;
        },
        [](Sums acc, const Sums& s) {
            acc.sum += s.sum;
            acc.sumsq += s.sumsq;
            return acc;
        });

    const double n = static_cast<double>(n_particles);
    const double mean = total.sum / n;
    const double var = std::max(0.0, (total.sumsq - n * mean * mean) / (n - 1.0));
    return {mean, std::sqrt(var / n)};
}

ControlFeedback equilibrium_feedback(const GameSpec& game, const EquilibriumResult& result,
                                     std::size_t pop_index) {
    if (pop_index >= game.size()) throw IndexOutOfRange("population index out of range");
    if (result.solutions.size() != game.size())
        throw PopulationCountMismatch("equilibrium result does not cover every population");
    const GamePopulation* pop = &game.populations[pop_index];
    const BackwardSolution* backward = &result.solutions[pop_index].backward;
    const MeasureFlow* flow = &result.fixed_point.flow;
    return [pop, backward, flow](double t, const Eigen::VectorXd& x) -> Eigen::VectorXd {
        const std::size_t k = flow->grid().index_of(t);
        return minimize_hamiltonian(*pop, t, x, backward->evaluate_u(k, x), flow->at_step(k));
    };
}

namespace {

ControlTable build_control_table(const GameSpec& game, const EquilibriumResult& result,
                                 std::size_t i) {
    const GamePopulation& pop = game.populations[i];
    const MeasureFlow& flow = result.fixed_point.flow;
    const TimeGrid& grid = flow.grid();
    const ControlFeedback feedback = equilibrium_feedback(game, result, i);

    ControlTable table;
    table.times = grid.values();
    if (pop.state_dim == 1) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < grid.points(); ++k) {
            const EmpiricalMeasure& mu = flow.measure(i, k);
            lo = std::min(lo, mu.quantile(0.05)[0]);
            hi = std::max(hi, mu.quantile(0.95)[0]);
        }
        if (!(hi > lo)) {
            lo -= 0.5;
            hi += 0.5;
        }
        constexpr int kRows = 21;
        table.nodes = Eigen::VectorXd::LinSpaced(kRows, lo, hi);
        Eigen::VectorXd state(1);
        for (std::size_t k = 0; k < grid.points(); ++k) {
            Eigen::MatrixXd values(kRows, pop.controls.dimension());
            for (int r = 0; r < kRows; ++r) {
                state[0] = table.nodes[r];
                values.row(r) = feedback(grid[k], state).transpose();
            }
            table.values.push_back(std::move(values));
        }
    } else {
        // no scalar axis to tabulate on; record the control at the mean state
        for (std::size_t k = 0; k < grid.points(); ++k) {
            Eigen::MatrixXd values(1, pop.controls.dimension());
            values.row(0) = feedback(grid[k], flow.measure(i, k).mean()).transpose();
            table.values.push_back(std::move(values));
        }
    }
    return table;
}

}  // namespace

EquilibriumResult solve_equilibrium(const GameSpec& game, const TimeGrid& grid,
                                    const PsiConfig& config) {
    game.validate();
    config.validate();
    const PopulationSystem system = assemble_pontryagin(game);

    std::vector<std::vector<Eigen::VectorXd>> atoms(game.size());
    for (std::size_t i = 0; i < game.size(); ++i)
        atoms[i].assign(grid.points(), game.initial_states[i]);
    const MeasureFlow start = MeasureFlow::dirac(grid, atoms);

    EquilibriumResult out;
    out.fixed_point = iterate(system, start, config);
    // the iteration's last map evaluation happened exactly at
    // fixed_point.flow, so this call reproduces its solutions bit for bit
    PsiResult last = psi_map_detailed(system, out.fixed_point.flow, config);
    out.solutions = std::move(last.solutions);
    for (std::size_t i = 0; i < game.size(); ++i) {
        out.controls.push_back(build_control_table(game, out, i));
        out.costs.push_back(estimate_cost(game, i, equilibrium_feedback(game, out, i),
                                          out.fixed_point.flow, config.n_particles, config.seed));
    }
    return out;
}

NashReport verify_equilibrium(const GameSpec& game, const EquilibriumResult& result,
                              std::size_t n_perturbations, double magnitude,
                              std::uint64_t seed) {
    game.validate();
    if (n_perturbations == 0) throw SchemaError("at least one deviation is required");
    if (!(magnitude > 0.0) || !std::isfinite(magnitude))
        throw SchemaError("deviation magnitude must be positive");
    if (result.solutions.size() != game.size())
        throw PopulationCountMismatch("equilibrium result does not cover every population");

    const MeasureFlow& flow = result.fixed_point.flow;
    const double horizon = flow.grid().horizon();
    const std::size_t particles = result.solutions.front().paths.particles();

    NashReport report;
    report.worst_gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < game.size(); ++i) {
        const GamePopulation& pop = game.populations[i];
        const ControlFeedback star = equilibrium_feedback(game, result, i);
        const CostEstimate base = estimate_cost(game, i, star, flow, particles, seed);

        std::vector<DeviationRecord> records;
        const std::uint32_t stream =
            rng::stream_id(rng::Stream::Deviation, static_cast<std::uint32_t>(i));
        for (std::size_t d = 0; d < n_perturbations; ++d) {
            const std::uint32_t ctr = static_cast<std::uint32_t>(d);
            const double center = horizon * (0.2 + 0.6 * rng::uniform(seed, stream, ctr, 0, 0));
            const double width = horizon * (0.1 + 0.2 * rng::uniform(seed, stream, ctr, 0, 1));
            Eigen::VectorXd direction(pop.controls.dimension());
            std::vector<double> draws(static_cast<std::size_t>(direction.size()));
            rng::fill_normals(seed, stream, ctr, 1, draws);
            for (Eigen::Index j = 0; j < direction.size(); ++j)
                direction[j] = draws[static_cast<std::size_t>(j)];
            const double norm = direction.norm();
            direction = norm > 0.0 ? Eigen::VectorXd(direction / norm)
                                   : Eigen::VectorXd(Eigen::VectorXd::Ones(direction.size()) /
                                                     std::sqrt(static_cast<double>(
                                                         direction.size())));

            // equilibrium control plus a smooth time bump in a fixed
            // direction, projected back into the box
            const ControlSet box = pop.controls;
            const ControlFeedback deviated = [star, center, width, direction, magnitude,
                                              box](double t, const Eigen::VectorXd& x)
                -> Eigen::VectorXd {
                Eigen::VectorXd a = star(t, x);
                const double u = (t - center) / width;
                if (std::abs(u) < 1.0)
                    a += magnitude * std::exp(1.0 - 1.0 / (1.0 - u * u)) * direction;
                return box.project(a);
            };

            const CostEstimate dev = estimate_cost(game, i, deviated, flow, particles, seed);
            const double gap = dev.mean - base.mean;
            const double pooled = std::hypot(dev.standard_error, base.standard_error);
            records.push_back({gap, pooled});
            if (gap < report.worst_gap) {
                report.worst_gap = gap;
                report.worst_gap_se = pooled;
            }
            if (gap < -3.0 * pooled) report.passed = false;
        }
        report.deviations.push_back(std::move(records));
    }
    return report;
}

}  // namespace mffbsde
