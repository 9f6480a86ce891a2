#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "mffbsde/errors.hpp"
#include "mffbsde/forward_sde.hpp"
#include "mffbsde/girsanov.hpp"
#include "mffbsde/measure.hpp"

using namespace mffbsde;

namespace {

Eigen::VectorXd scalar(double v) { return Eigen::VectorXd::Constant(1, v); }

CoefficientBundle brownian_bundle() {
    CoefficientBundle c;
    c.h = [](double, const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(1); };
    c.b = [](double, const Eigen::VectorXd&, const Eigen::VectorXd&, const Eigen::MatrixXd&,
             const Measures&) { return Eigen::VectorXd::Zero(1); };
    c.sigma = [](double, const Eigen::VectorXd&) { return Eigen::MatrixXd::Identity(1, 1); };
    c.f = [](double, const Eigen::VectorXd&, const Eigen::VectorXd&, const Eigen::MatrixXd&,
             const Measures&) { return Eigen::VectorXd::Zero(1); };
    c.g = [](const Eigen::VectorXd& x, const Measures&) { return x; };
    return c;
}

StateDriftFn constant_integrand(double c) {
    return [c](double, const Eigen::VectorXd&) { return Eigen::VectorXd::Constant(1, c); };
}

MeasureFlow trivial_flow(const TimeGrid& grid) {
    std::vector<std::vector<Eigen::VectorXd>> atoms(1);
    atoms[0].assign(grid.points(), Eigen::VectorXd::Zero(1));
    return MeasureFlow::dirac(grid, atoms);
}

}  // namespace

TEST_CASE("zero integrand leaves every weight at one") {
    const auto grid = TimeGrid::uniform(1.0, 16);
    const auto paths = simulate_reference(brownian_bundle(), scalar(0.0), grid, 200, 5);
    const auto w = doleans_exponential(paths, constant_integrand(0.0));
    CHECK((w.weights.array() == 1.0).all());
    CHECK((w.log_weights.array() == 0.0).all());
    CHECK((w.weights.col(0).array() == 1.0).all());
}

TEST_CASE("constant integrand gives the closed-form log weight per particle") {
    const auto grid = TimeGrid::uniform(1.0, 32);
    const auto paths = simulate_reference(brownian_bundle(), scalar(0.0), grid, 300, 11);
    const double c = 0.8;
    const auto w = doleans_exponential(paths, constant_integrand(c));
    const auto last = static_cast<Eigen::Index>(grid.steps());
    for (std::size_t p = 0; p < paths.particles(); ++p) {
        double brownian = 0.0;
        for (std::size_t k = 0; k < grid.steps(); ++k)
            brownian += paths.increments[k](static_cast<Eigen::Index>(p), 0);
        const double expected = c * brownian - 0.5 * c * c * grid.horizon();
        CHECK(w.log_weights(static_cast<Eigen::Index>(p), last) ==
              doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("terminal weights match the lognormal moments") {
    // For a constant integrand the discrete product telescopes, so terminal
    // weights are exactly exp(W_T - T/2): mean 1, second moment e, and
    // expected effective sample fraction 1/e.
    const std::size_t n = 20000;
    const auto grid = TimeGrid::uniform(1.0, 50);
    const auto paths = simulate_reference(brownian_bundle(), scalar(0.0), grid, n, 404);
    const auto w = doleans_exponential(paths, constant_integrand(1.0));
    const auto terminal = w.weights.col(static_cast<Eigen::Index>(grid.steps()));

    const double se_mean = std::sqrt((std::exp(1.0) - 1.0) / static_cast<double>(n));
    CHECK(std::abs(terminal.mean() - 1.0) < 3.0 * se_mean);
    CHECK(std::abs(terminal.array().square().mean() - std::exp(1.0)) < 0.45);

    const auto report = martingale_diagnostic(w);
    const double ess_fraction = report.rows.back().effective_samples / static_cast<double>(n);
    CHECK(std::abs(ess_fraction - std::exp(-1.0)) < 0.06);
}

TEST_CASE("splitting the range and restarting is exact in log space") {
    const auto grid = TimeGrid::uniform(1.0, 24);
    auto c = brownian_bundle();
    c.h = [](double, const Eigen::VectorXd& x) { return Eigen::VectorXd(-0.5 * x); };
    const auto paths = simulate_reference(c, scalar(1.0), grid, 150, 8);
    const StateDriftFn integrand = [](double, const Eigen::VectorXd& x) {
        return Eigen::VectorXd(Eigen::VectorXd::Constant(1, 0.7 * std::tanh(x[0])));
    };
    const auto full = doleans_exponential(paths, integrand);
    const std::size_t split = 11;
    const auto head = doleans_exponential(paths, integrand, 0, split, nullptr);
    const auto head_state = head.state_at(split);
    const auto tail = doleans_exponential(paths, integrand, split, grid.steps(), &head_state);

    const auto last = static_cast<Eigen::Index>(grid.steps());
    CHECK((tail.log_weights.col(last).array() == full.log_weights.col(last).array()).all());
    CHECK((tail.compensations.col(last).array() == full.compensations.col(last).array()).all());
    CHECK((tail.weights.col(last).array() == full.weights.col(last).array()).all());
    CHECK((full.weights.array() > 0.0).all());
}

TEST_CASE("unit weights reproduce the uniform law") {
    const auto grid = TimeGrid::uniform(1.0, 10);
    const auto paths = simulate_reference(brownian_bundle(), scalar(0.4), grid, 500, 13);
    const auto w = doleans_exponential(paths, constant_integrand(0.0));
    const auto law = weighted_law(paths, w, 10);
    CHECK(law.mean()[0] == doctest::Approx(paths.states[10].col(0).mean()).epsilon(1e-12));
}

TEST_CASE("reweighting reference paths reproduces the drifted law") {
    // Identity at the heart of the decoupling: weighting driftless paths by
    // the exponential of the reduced drift equals simulating with the drift.
    const std::size_t n = 20000;
    const double c = 1.0;
    const auto grid = TimeGrid::uniform(1.0, 50);
    const auto reference = simulate_reference(brownian_bundle(), scalar(0.0), grid, n, 99);
    const auto w = doleans_exponential(reference, constant_integrand(c));
    const auto law = weighted_law(reference, w, grid.steps());
    CHECK(std::abs(law.mean()[0] - c * grid.horizon()) < 0.075);

    auto drifted = brownian_bundle();
    drifted.b = [c](double, const Eigen::VectorXd&, const Eigen::VectorXd&,
                    const Eigen::MatrixXd&, const Measures&) {
        return Eigen::VectorXd::Constant(1, c);
    };
    const ValueFeedback zero_value = [](std::size_t, const Eigen::VectorXd&) {
        return Eigen::VectorXd::Zero(1);
    };
    const GradientFeedback zero_gradient = [](std::size_t, const Eigen::VectorXd&) {
        return Eigen::MatrixXd::Zero(1, 1);
    };
    const auto direct = simulate_feedback(drifted, scalar(0.0), grid, n, 99, zero_value,
                                          zero_gradient, trivial_flow(grid));
    const EmpiricalMeasure direct_law(direct.states[grid.steps()]);
    CHECK(wasserstein1(law, direct_law) < 0.05);
}

TEST_CASE("population bundles assemble in order") {
    const auto grid = TimeGrid::uniform(1.0, 5);
    const auto a = simulate_reference(brownian_bundle(), scalar(-1.0), grid, 100, 1);
    const auto b = simulate_reference(brownian_bundle(), scalar(2.0), grid, 100, 2, 1);
    const auto wa = doleans_exponential(a, constant_integrand(0.0));
    const auto wb = doleans_exponential(b, constant_integrand(0.0));
    const auto laws = weighted_laws({a, b}, {wa, wb}, 0);
    CHECK(laws.size() == 2);
    CHECK(laws[0].mean()[0] == doctest::Approx(-1.0));
    CHECK(laws[1].mean()[0] == doctest::Approx(2.0));
    CHECK_THROWS_AS(weighted_laws({a}, {wa, wb}, 0), PopulationCountMismatch);
}

TEST_CASE("diagnostic on unit weights") {
    const auto grid = TimeGrid::uniform(2.0, 4);
    const auto paths = simulate_reference(brownian_bundle(), scalar(0.0), grid, 64, 3);
    const auto w = doleans_exponential(paths, constant_integrand(0.0));
    const auto report = martingale_diagnostic(w);
    CHECK(report.rows.size() == grid.points());
    CHECK_FALSE(report.any_degenerate);
    for (const auto& row : report.rows) {
        CHECK(row.effective_samples == 64.0);
        CHECK(row.mean == 1.0);
        CHECK(row.standard_error == 0.0);
        CHECK(row.log_spread == 0.0);
    }
    CHECK(report.rows[1].time == 0.5);
}

TEST_CASE("effective sample size of a two-atom fixture") {
    const auto grid = TimeGrid::uniform(1.0, 1);
    Eigen::MatrixXd weights(2, 2);
    weights << 1.0, 2.0, 1.0, 0.0;
    Eigen::MatrixXd logs(2, 2);
    logs << 0.0, std::log(2.0), 0.0, -700.0;
    const WeightEnsemble fixture{grid, 0, 1, weights, logs, Eigen::MatrixXd::Zero(2, 2)};
    const auto report = martingale_diagnostic(fixture);
    CHECK(report.rows[1].effective_samples == 1.0);
    CHECK(report.rows[0].effective_samples == 2.0);
}

TEST_CASE("degenerate weights raise the flag") {
    const auto grid = TimeGrid::uniform(1.0, 1);
    const Eigen::Index n = 200;
    Eigen::MatrixXd weights = Eigen::MatrixXd::Ones(n, 2);
    weights.col(1).setConstant(1e-9);
    weights(0, 1) = 1e6;  // one particle carries everything
    const WeightEnsemble fixture{grid, 0, 1, weights,
                                 weights.array().log().matrix(), Eigen::MatrixXd::Zero(n, 2)};
    const auto report = martingale_diagnostic(fixture);
    CHECK(report.rows[1].degenerate);
    CHECK(report.any_degenerate);
    CHECK(report.rows[1].effective_samples < 2.0);
}

TEST_CASE("weight failures carry particle and step") {
    const auto grid = TimeGrid::uniform(1.0, 4);
    const auto paths = simulate_reference(brownian_bundle(), scalar(0.0), grid, 20, 7);

    const StateDriftFn exploding = [](double t, const Eigen::VectorXd&) {
        return Eigen::VectorXd::Constant(
            1, t > 0.3 ? std::numeric_limits<double>::infinity() : 0.0);
    };
    try {
        doleans_exponential(paths, exploding);
        FAIL("expected NonFiniteWeight");
    } catch (const NonFiniteWeight& e) {
        CHECK(e.step == 2);  // first step past t = 0.3
        CHECK(e.particle < paths.particles());
    }

    // A huge integrand drives the quadratic penalty so low that the weight
    // underflows to zero, which would silently delete the particle.
    CHECK_THROWS_AS(doleans_exponential(paths, constant_integrand(2000.0)), NonFiniteWeight);
}

TEST_CASE("input validation") {
    const auto grid = TimeGrid::uniform(1.0, 4);
    const auto paths = simulate_reference(brownian_bundle(), scalar(0.0), grid, 20, 7);
    const auto w = doleans_exponential(paths, constant_integrand(0.0));

    const auto other = simulate_reference(brownian_bundle(), scalar(0.0),
                                          TimeGrid::uniform(1.0, 5), 20, 7);
    CHECK_THROWS_AS(weighted_law(other, w, 0), GridMismatch);
    CHECK_THROWS_AS(weighted_law(paths, w, 5), IndexOutOfRange);
    CHECK_THROWS_AS(doleans_exponential(paths, constant_integrand(0.0), 3, 2, nullptr),
                    IndexOutOfRange);
    CHECK_THROWS_AS(doleans_exponential(paths, constant_integrand(0.0), 0, 9, nullptr),
                    IndexOutOfRange);

    const StateDriftFn wide = [](double, const Eigen::VectorXd&) {
        return Eigen::VectorXd::Zero(2);
    };
    CHECK_THROWS_AS(doleans_exponential(paths, wide), DimensionMismatch);

    WeightState bad{Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(3)};
    CHECK_THROWS_AS(doleans_exponential(paths, constant_integrand(0.0), 0, 4, &bad),
                    LengthMismatch);
}
