#include "mffbsde/backward_lsmc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include "mffbsde/errors.hpp"
#include "mffbsde/parallel.hpp"

namespace mffbsde {
namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void enumerate_exponents(Eigen::Index coord, Eigen::Index dim, int budget,
                         std::vector<int>& current, std::vector<std::vector<int>>& out) {
    if (coord == dim) {
        out.push_back(current);
        return;
    }
    for (int e = 0; e <= budget; ++e) {
        current[static_cast<std::size_t>(coord)] = e;
        enumerate_exponents(coord + 1, dim, budget - e, current, out);
    }
    current[static_cast<std::size_t>(coord)] = 0;
}

/// a^T b / rows with partial sums combined in fixed block order, so the
/// normal equations are bit-identical for any worker count.
template <class MatA, class MatB>
Eigen::MatrixXd crossprod_mean(const MatA& a, const MatB& b) {
    const std::size_t rows = static_cast<std::size_t>(a.rows());
    const Eigen::MatrixXd init = Eigen::MatrixXd::Zero(a.cols(), b.cols());
    Eigen::MatrixXd total = par::blocked_reduce<Eigen::MatrixXd>(
        rows, init,
        [&](std::size_t, std::size_t lo, std::size_t hi) -> Eigen::MatrixXd {
            return a.middleRows(static_cast<Eigen::Index>(lo), static_cast<Eigen::Index>(hi - lo))
                       .transpose() *
                   b.middleRows(static_cast<Eigen::Index>(lo), static_cast<Eigen::Index>(hi - lo));
        },
        [](Eigen::MatrixXd acc, const Eigen::MatrixXd& part) -> Eigen::MatrixXd {
            acc += part;
            return acc;
        });
    return total / static_cast<double>(rows);
}

/// Everything needed to run regressions against one cross-section.
struct FitContext {
    Eigen::VectorXd shift;
    Eigen::VectorXd scale;
    std::vector<char> active;
    std::vector<Eigen::Index> features;  // indices of fittable basis functions
    RowMajorMatrix phi;                  // particles x dimension()
    RowMajorMatrix phi_active;           // particles x features.size()
    Eigen::LDLT<Eigen::MatrixXd> ldlt;
};

FitContext build_context(const Eigen::MatrixXd& states, const RegressionBasis& basis,
                         std::size_t step) {
    const Eigen::Index m = states.cols();
    const Eigen::Index n = states.rows();
    FitContext ctx;
    const Eigen::RowVectorXd mean = states.colwise().mean();
    const Eigen::RowVectorXd sd =
        (states.rowwise() - mean).array().square().colwise().mean().sqrt();

    ctx.shift = mean.transpose();
    ctx.scale.resize(m);
    ctx.active.assign(static_cast<std::size_t>(m), 0);
    bool any_active = false;
    for (Eigen::Index j = 0; j < m; ++j) {
        const bool spread = sd[j] > 1e-12 * std::max(1.0, std::abs(mean[j]));
        ctx.active[static_cast<std::size_t>(j)] = spread ? 1 : 0;
        ctx.scale[j] = spread ? sd[j] : 1.0;
        any_active = any_active || spread;
    }
    // A fully collapsed cross-section is the expected shape of a
    // deterministic start at the first grid point, where conditioning
    // reduces to the plain mean. Anywhere else it means the ensemble is
    // degenerate and a state-dependent fit would be fiction.
    if (!any_active && basis.degree() >= 1 && step > 0)
        throw RankDeficientRegression(step, "cross-section carries no spread");

    for (Eigen::Index i = 0; i < basis.dimension(); ++i) {
        const auto& expo = basis.exponents()[static_cast<std::size_t>(i)];
        bool fittable = true;
        for (Eigen::Index j = 0; j < m; ++j)
            if (!ctx.active[static_cast<std::size_t>(j)] && expo[static_cast<std::size_t>(j)] > 0)
                fittable = false;
        if (fittable) ctx.features.push_back(i);
    }

    ctx.phi.resize(n, basis.dimension());
    par::parallel_for(static_cast<std::size_t>(n), [&](std::size_t lo, std::size_t hi) {
        Eigen::VectorXd standardized(m);
        for (std::size_t p = lo; p < hi; ++p) {
            const auto row = static_cast<Eigen::Index>(p);
            standardized = (states.row(row).transpose() - ctx.shift).cwiseQuotient(ctx.scale);
            basis.evaluate_into(standardized, &ctx.phi(row, 0));
        }
    });

    const auto n_active = static_cast<Eigen::Index>(ctx.features.size());
    ctx.phi_active.resize(n, n_active);
    for (Eigen::Index c = 0; c < n_active; ++c)
        ctx.phi_active.col(c) = ctx.phi.col(ctx.features[static_cast<std::size_t>(c)]);

    Eigen::MatrixXd gram = crossprod_mean(ctx.phi_active, ctx.phi_active);
    gram.diagonal().array() += kRidgeFloor;
    ctx.ldlt.compute(gram);
    // q coinciding feature columns leave a pivot near q times the ridge, so
    // anything within 64x the floor is attributable to the ridge alone.
    // Healthy standardized pivots sit many orders of magnitude higher.
    if (ctx.ldlt.info() != Eigen::Success || ctx.ldlt.vectorD().minCoeff() < 64.0 * kRidgeFloor)
        throw RankDeficientRegression(step, "normal equations singular beyond the ridge floor");
    return ctx;
}

/// Least squares coefficients on the full feature set; unfittable features
/// get exact zeros.
Eigen::MatrixXd fit(const FitContext& ctx, const Eigen::MatrixXd& targets, Eigen::Index n_basis) {
    const Eigen::MatrixXd rhs = crossprod_mean(ctx.phi_active, targets);
    const Eigen::MatrixXd solved = ctx.ldlt.solve(rhs);
    Eigen::MatrixXd coeffs = Eigen::MatrixXd::Zero(n_basis, targets.cols());
    for (std::size_t i = 0; i < ctx.features.size(); ++i)
        coeffs.row(ctx.features[i]) = solved.row(static_cast<Eigen::Index>(i));
    return coeffs;
}

/// Fitted values at the training states. Copies each feature row into a
/// dense row vector before the product so the arithmetic path matches the
/// public evaluators exactly.
void fitted_values(const FitContext& ctx, const Eigen::MatrixXd& coeffs, Eigen::MatrixXd& out) {
    out.resize(ctx.phi.rows(), coeffs.cols());
    par::parallel_for(static_cast<std::size_t>(ctx.phi.rows()), [&](std::size_t lo, std::size_t hi) {
        Eigen::RowVectorXd features(ctx.phi.cols());
        for (std::size_t p = lo; p < hi; ++p) {
            const auto row = static_cast<Eigen::Index>(p);
            features = ctx.phi.row(row);
            out.row(row) = features * coeffs;
        }
    });
}

Eigen::RowVectorXd surrogate_row(const RegressionBasis& basis, const StepFit& step,
                                 const Eigen::VectorXd& x, const Eigen::MatrixXd& coeffs) {
    const Eigen::VectorXd standardized = (x - step.shift).cwiseQuotient(step.scale);
    Eigen::RowVectorXd features(basis.dimension());
    basis.evaluate_into(standardized, features.data());
    return features * coeffs;
}

void ensure_finite(const Eigen::MatrixXd& values, std::size_t step, const char* what) {
    if (values.allFinite()) return;
    for (Eigen::Index p = 0; p < values.rows(); ++p)
        if (!values.row(p).allFinite())
            throw NonFiniteState(static_cast<std::size_t>(p), step, what);
    throw NonFiniteState(0, step, what);
}

}  // namespace

RegressionBasis::RegressionBasis(Eigen::Index state_dim, int degree)
    : state_dim_(state_dim), degree_(degree) {
    if (state_dim < 1) throw DimensionMismatch("regression basis needs state_dim >= 1");
    if (degree < 0) throw DimensionMismatch("regression basis needs degree >= 0");
    std::vector<int> current(static_cast<std::size_t>(state_dim), 0);
    enumerate_exponents(0, state_dim, degree, current, exponents_);
    std::stable_sort(exponents_.begin(), exponents_.end(),
                     [](const std::vector<int>& a, const std::vector<int>& b) {
                         return std::accumulate(a.begin(), a.end(), 0) <
                                std::accumulate(b.begin(), b.end(), 0);
                     });
}

void RegressionBasis::evaluate_into(const Eigen::VectorXd& standardized, double* out) const {
    for (std::size_t i = 0; i < exponents_.size(); ++i) {
        const auto& expo = exponents_[i];
        double value = 1.0;
        for (Eigen::Index j = 0; j < state_dim_; ++j)
            for (int q = 0; q < expo[static_cast<std::size_t>(j)]; ++q) value *= standardized[j];
        out[i] = value;
    }
}

Eigen::VectorXd BackwardSolution::evaluate_u(std::size_t t_index, const Eigen::VectorXd& x) const {
    if (t_index >= fits.size())
        throw IndexOutOfRange("value surrogate index " + std::to_string(t_index) +
                              " exceeds last grid point " + std::to_string(fits.size() - 1));
    if (x.size() != basis.state_dim())
        throw DimensionMismatch("value surrogate expects a state of dimension " +
                                std::to_string(basis.state_dim()));
    return surrogate_row(basis, fits[t_index], x, fits[t_index].u).transpose();
}

Eigen::MatrixXd BackwardSolution::evaluate_d(std::size_t t_index, const Eigen::VectorXd& x) const {
    if (t_index >= z_values.size())
        throw IndexOutOfRange("gradient surrogate index " + std::to_string(t_index) +
                              " exceeds last step " + std::to_string(z_values.size() - 1));
    if (x.size() != basis.state_dim())
        throw DimensionMismatch("gradient surrogate expects a state of dimension " +
                                std::to_string(basis.state_dim()));
    const Eigen::RowVectorXd flat = surrogate_row(basis, fits[t_index], x, fits[t_index].d);
    Eigen::MatrixXd z(value_dim, noise_dim);
    for (Eigen::Index j = 0; j < value_dim; ++j)
        for (Eigen::Index l = 0; l < noise_dim; ++l) z(j, l) = flat[j * noise_dim + l];
    return z;
}

BackwardSolution solve_bsde(const PathEnsemble& paths, const DriverFn& driver,
                            const TerminalFn& terminal, const MeasureFlow& flow,
                            const RegressionBasis& basis) {
    const std::size_t n_particles = paths.particles();
    if (n_particles == 0) throw EmptySamples("backward solve needs at least one particle");
    if (basis.state_dim() != paths.state_dim)
        throw DimensionMismatch("basis dimension " + std::to_string(basis.state_dim()) +
                                " does not match state dimension " +
                                std::to_string(paths.state_dim));
    flow.grid().require_same(paths.grid, "backward solve");

    const std::size_t n_steps = paths.grid.steps();
    const Measures& terminal_measures = flow.at_step(n_steps);
    const Eigen::Index n_vals = terminal(paths.state(0, n_steps), terminal_measures).size();
    const Eigen::Index n_noise = paths.noise_dim;
    const Eigen::Index n_basis = basis.dimension();

    BackwardSolution sol{paths.grid, n_vals, n_noise, basis, {}, {}, {}};
    sol.fits.resize(n_steps + 1);
    sol.y_values.resize(n_steps + 1);
    sol.z_values.resize(n_steps);

    // Terminal data is exact per particle; the fit alongside it only backs
    // the value surrogate at the last grid point.
    sol.y_values[n_steps].resize(static_cast<Eigen::Index>(n_particles), n_vals);
    par::parallel_for(n_particles, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t p = lo; p < hi; ++p) {
            const Eigen::VectorXd g = terminal(paths.state(p, n_steps), terminal_measures);
            if (g.size() != n_vals)
                throw DimensionMismatch("terminal function changed output dimension");
            sol.y_values[n_steps].row(static_cast<Eigen::Index>(p)) = g.transpose();
        }
    });
    ensure_finite(sol.y_values[n_steps], n_steps, "terminal values are not finite");
    {
        const FitContext ctx = build_context(paths.states[n_steps], basis, n_steps);
        StepFit& step = sol.fits[n_steps];
        step.shift = ctx.shift;
        step.scale = ctx.scale;
        step.active = ctx.active;
        step.u = fit(ctx, sol.y_values[n_steps], n_basis);
    }

    Eigen::MatrixXd targets(static_cast<Eigen::Index>(n_particles), n_vals);
    Eigen::MatrixXd gradient_targets(static_cast<Eigen::Index>(n_particles), n_vals * n_noise);
    Eigen::MatrixXd refined(static_cast<Eigen::Index>(n_particles), n_vals);

    for (std::size_t k = n_steps; k-- > 0;) {
        const double t = paths.grid[k];
        const double dt = paths.grid.dt(k);
        const Measures& measures = flow.at_step(k);
        const Eigen::MatrixXd& y_next = sol.y_values[k + 1];
        const FitContext ctx = build_context(paths.states[k], basis, k);
        StepFit& step = sol.fits[k];
        step.shift = ctx.shift;
        step.scale = ctx.scale;
        step.active = ctx.active;

        par::parallel_for(n_particles, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t p = lo; p < hi; ++p) {
                const auto row = static_cast<Eigen::Index>(p);
                for (Eigen::Index j = 0; j < n_vals; ++j)
                    for (Eigen::Index l = 0; l < n_noise; ++l)
                        gradient_targets(row, j * n_noise + l) =
                            y_next(row, j) * paths.increments[k](row, l) / dt;
            }
        });
        step.d = fit(ctx, gradient_targets, n_basis);
        fitted_values(ctx, step.d, sol.z_values[k]);
        ensure_finite(sol.z_values[k], k, "fitted gradients are not finite");

        const auto assemble_targets = [&](const Eigen::MatrixXd& y_argument) {
            par::parallel_for(n_particles, [&](std::size_t lo, std::size_t hi) {
                Eigen::MatrixXd z(n_vals, n_noise);
                for (std::size_t p = lo; p < hi; ++p) {
                    const auto row = static_cast<Eigen::Index>(p);
                    for (Eigen::Index j = 0; j < n_vals; ++j)
                        for (Eigen::Index l = 0; l < n_noise; ++l)
                            z(j, l) = sol.z_values[k](row, j * n_noise + l);
                    const Eigen::VectorXd x = paths.state(p, k);
                    const Eigen::VectorXd value = driver(t, x, y_argument.row(row).transpose(), z,
                                                         measures);
                    if (value.size() != n_vals)
                        throw DimensionMismatch("driver changed output dimension");
                    targets.row(row) = y_next.row(row) + value.transpose() * dt;
                }
            });
            ensure_finite(targets, k, "driver targets are not finite");
        };

        // First pass feeds the driver the step-ahead fitted value, then one
        // refinement re-evaluates it at the newly fitted value.
        assemble_targets(y_next);
        const Eigen::MatrixXd first_pass = fit(ctx, targets, n_basis);
        fitted_values(ctx, first_pass, refined);
        ensure_finite(refined, k, "fitted values are not finite");
        assemble_targets(refined);
        step.u = fit(ctx, targets, n_basis);
        fitted_values(ctx, step.u, sol.y_values[k]);
        ensure_finite(sol.y_values[k], k, "fitted values are not finite");
    }
    return sol;
}

}  // namespace mffbsde
