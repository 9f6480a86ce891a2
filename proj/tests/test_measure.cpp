#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "mffbsde/errors.hpp"
#include "mffbsde/measure.hpp"
#include "mffbsde/rng.hpp"
#include "oracles.hpp"

using namespace mffbsde;

namespace {

EmpiricalMeasure scalar_measure(const std::vector<double>& values) {
    Eigen::MatrixXd s(values.size(), 1);
    for (std::size_t i = 0; i < values.size(); ++i) s(static_cast<Eigen::Index>(i), 0) = values[i];
    return EmpiricalMeasure(std::move(s));
}

EmpiricalMeasure scalar_measure(const std::vector<double>& values,
                                const std::vector<double>& weights) {
    Eigen::MatrixXd s(values.size(), 1);
    Eigen::VectorXd w(weights.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        s(static_cast<Eigen::Index>(i), 0) = values[i];
        w[static_cast<Eigen::Index>(i)] = weights[i];
    }
    return EmpiricalMeasure(std::move(s), w);
}

// deterministic pseudo-random doubles for property tests
double test_unit(std::uint32_t a, std::uint32_t b) {
    return rng::uniform(999, rng::stream_id(rng::Stream::Experiment), a, b, 0);
}

}  // namespace

TEST_CASE("construction validates samples and weights") {
    CHECK_THROWS_AS(EmpiricalMeasure(Eigen::MatrixXd(0, 1)), EmptySamples);
    Eigen::MatrixXd two(2, 1);
    two << 1.0, 2.0;
    CHECK_THROWS_AS(EmpiricalMeasure(two, Eigen::Vector3d(1, 1, 1)), LengthMismatch);
    CHECK_THROWS_AS(EmpiricalMeasure(two, Eigen::Vector2d(1, -0.5)), NegativeWeight);
    CHECK_THROWS_AS(EmpiricalMeasure(two, Eigen::Vector2d(0, 0)), NegativeWeight);
}

TEST_CASE("weighted mean, deviation and quantiles") {
    const auto m = scalar_measure({0.0, 10.0}, {3.0, 1.0});
    CHECK(m.mean()[0] == doctest::Approx(2.5));
    CHECK(m.std_dev()[0] == doctest::Approx(std::sqrt(0.75 * 6.25 + 0.25 * 56.25)));
    CHECK(m.quantile(0.5)[0] == 0.0);
    CHECK(m.quantile(0.75)[0] == 0.0);
    CHECK(m.quantile(0.76)[0] == 10.0);
    CHECK(m.quantile(1.0)[0] == 10.0);
}

TEST_CASE("quantile coupling on interleaved supports") {
    // mass 1/2 travels 0->1 and 4->2
    const auto mu = scalar_measure({0.0, 4.0});
    const auto nu = scalar_measure({1.0, 2.0});
    CHECK(wasserstein1_1d(mu, nu) == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(oracle::transport_lp({0, 4}, {1, 1}, {1, 2}, {1, 1}) == doctest::Approx(1.5));
    CHECK(oracle::assignment_w1({0, 4}, {1, 2}) == doctest::Approx(1.5));
}

TEST_CASE("translating a cloud moves it by the shift") {
    const auto mu = scalar_measure({-1.0, 0.5, 2.0});
    for (double c : {0.25, -3.0, 7.5}) {
        const auto nu = scalar_measure({-1.0 + c, 0.5 + c, 2.0 + c});
        CHECK(wasserstein1_1d(mu, nu) == doctest::Approx(std::abs(c)).epsilon(1e-12));
    }
    CHECK(wasserstein1_1d(mu, mu) == 0.0);
}

TEST_CASE("exact distance matches the transport LP on random weighted instances") {
    for (std::uint32_t trial = 0; trial < 60; ++trial) {
        const std::size_t n = 1 + trial % 6;
        const std::size_t m = 1 + (trial / 2) % 6;
        std::vector<double> x(n), wx(n), y(m), wy(m);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = 10.0 * test_unit(trial, static_cast<std::uint32_t>(i)) - 5.0;
            wx[i] = 0.05 + test_unit(trial, static_cast<std::uint32_t>(100 + i));
        }
        for (std::size_t j = 0; j < m; ++j) {
            y[j] = 10.0 * test_unit(trial, static_cast<std::uint32_t>(200 + j)) - 5.0;
            wy[j] = 0.05 + test_unit(trial, static_cast<std::uint32_t>(300 + j));
        }
        const auto mu = scalar_measure(x, wx);
        const auto nu = scalar_measure(y, wy);
        const double fast = wasserstein1_1d(mu, nu);
        const double lp = oracle::transport_lp(x, wx, y, wy);
        CHECK(fast == doctest::Approx(lp).epsilon(1e-9));
    }
}

TEST_CASE("exact distance matches assignment enumeration on uniform instances") {
    for (std::uint32_t trial = 0; trial < 30; ++trial) {
        const std::size_t n = 2 + trial % 5;
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = 6.0 * test_unit(1000 + trial, static_cast<std::uint32_t>(i)) - 3.0;
            y[i] = 6.0 * test_unit(2000 + trial, static_cast<std::uint32_t>(i)) - 3.0;
        }
        const double fast = wasserstein1_1d(scalar_measure(x), scalar_measure(y));
        CHECK(fast == doctest::Approx(oracle::assignment_w1(x, y)).epsilon(1e-12));
    }
}

TEST_CASE("metric axioms hold on random triples") {
    for (std::uint32_t trial = 0; trial < 25; ++trial) {
        std::vector<double> x(4), y(4), z(4), wx(4), wy(4), wz(4);
        for (std::size_t i = 0; i < 4; ++i) {
            const auto ii = static_cast<std::uint32_t>(i);
            x[i] = 4.0 * test_unit(3000 + trial, ii) - 2.0;
            y[i] = 4.0 * test_unit(4000 + trial, ii) - 2.0;
            z[i] = 4.0 * test_unit(5000 + trial, ii) - 2.0;
            wx[i] = 0.1 + test_unit(6000 + trial, ii);
            wy[i] = 0.1 + test_unit(7000 + trial, ii);
            wz[i] = 0.1 + test_unit(8000 + trial, ii);
        }
        const auto mu = scalar_measure(x, wx);
        const auto nu = scalar_measure(y, wy);
        const auto rho = scalar_measure(z, wz);
        const double ab = wasserstein1_1d(mu, nu);
        const double ba = wasserstein1_1d(nu, mu);
        const double ac = wasserstein1_1d(mu, rho);
        const double cb = wasserstein1_1d(rho, nu);
        CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
        CHECK(ab <= ac + cb + 1e-12);
        CHECK(ab >= 0.0);
    }
}

TEST_CASE("positive homogeneity under scaling") {
    const auto mu = scalar_measure({-1.0, 0.0, 2.0}, {1.0, 2.0, 1.0});
    const auto nu = scalar_measure({0.5, 1.5}, {1.0, 3.0});
    const double base = wasserstein1_1d(mu, nu);
    const double a = 2.5;
    const auto mu_s = scalar_measure({-2.5, 0.0, 5.0}, {1.0, 2.0, 1.0});
    const auto nu_s = scalar_measure({1.25, 3.75}, {1.0, 3.0});
    CHECK(wasserstein1_1d(mu_s, nu_s) == doctest::Approx(a * base).epsilon(1e-12));
}

TEST_CASE("sliced distance concentrates on the projected mean gap") {
    // Diracs at (0,0) and (3,4): each projection contributes 5 |cos angle|,
    // whose average is 5 * 2 / pi.
    Eigen::MatrixXd a(1, 2), b(1, 2);
    a << 0.0, 0.0;
    b << 3.0, 4.0;
    SlicedOptions opts;
    opts.projections = 10000;
    opts.seed = 77;
    const double estimate = wasserstein1_sliced(EmpiricalMeasure(a), EmpiricalMeasure(b), opts);
    CHECK(estimate == doctest::Approx(5.0 * 2.0 / std::numbers::pi).epsilon(0.016));
}

TEST_CASE("sliced distance in 1-D collapses to the exact distance") {
    const auto mu = scalar_measure({0.0, 1.0, 3.0}, {1.0, 1.0, 2.0});
    const auto nu = scalar_measure({-1.0, 2.0});
    SlicedOptions opts;
    opts.projections = 8;
    CHECK(wasserstein1_sliced(mu, nu, opts) ==
          doctest::Approx(wasserstein1_1d(mu, nu)).epsilon(1e-13));
}

TEST_CASE("sliced distance is deterministic in the seed") {
    Eigen::MatrixXd a(3, 2), b(3, 2);
    a << 0, 0, 1, 1, 2, 0;
    b << 0.5, 0.25, 1.5, 1.0, 2.5, -0.5;
    const EmpiricalMeasure mu(a), nu(b);
    SlicedOptions opts;
    opts.projections = 64;
    const double first = wasserstein1_sliced(mu, nu, opts);
    const double second = wasserstein1_sliced(mu, nu, opts);
    CHECK(first == second);
    opts.seed += 1;
    CHECK(wasserstein1_sliced(mu, nu, opts) != first);
}

TEST_CASE("product distance sums populations and checks counts") {
    const auto mu1 = scalar_measure({0.0});
    const auto nu1 = scalar_measure({1.0});
    const auto mu2 = scalar_measure({0.0});
    const auto nu2 = scalar_measure({-2.0});
    CHECK(product_distance({mu1, mu2}, {nu1, nu2}) == doctest::Approx(3.0));
    CHECK_THROWS_AS(product_distance({mu1}, {nu1, nu2}), PopulationCountMismatch);
}

TEST_CASE("flow distance is the sup over grid points") {
    const auto grid = TimeGrid::uniform(1.0, 2);
    auto flow_at = [&](double terminal) {
        std::vector<std::vector<Eigen::VectorXd>> atoms(1);
        atoms[0] = {Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1),
                    Eigen::VectorXd::Constant(1, terminal)};
        return MeasureFlow::dirac(grid, atoms);
    };
    const auto a = flow_at(0.0);
    const auto b = flow_at(0.3);
    CHECK(flow_distance(a, b) == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(flow_distance(a, a) == 0.0);

    const auto other_grid = TimeGrid::uniform(1.0, 4);
    std::vector<std::vector<Eigen::VectorXd>> atoms(1);
    atoms[0].assign(5, Eigen::VectorXd::Zero(1));
    const auto c = MeasureFlow::dirac(other_grid, atoms);
    CHECK_THROWS_AS(flow_distance(a, c), GridMismatch);
}

TEST_CASE("holder modulus of the square-root flow is one") {
    const TimeGrid grid({0.0, 0.25, 1.0});
    std::vector<std::vector<Eigen::VectorXd>> atoms(1);
    atoms[0] = {Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, 0.5),
                Eigen::VectorXd::Constant(1, 1.0)};
    const auto flow = MeasureFlow::dirac(grid, atoms);
    CHECK(holder_modulus(flow) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("holder modulus stays finite on a linear flow") {
    const auto grid = TimeGrid::uniform(1.0, 16);
    std::vector<std::vector<Eigen::VectorXd>> atoms(1);
    for (std::size_t k = 0; k < grid.points(); ++k)
        atoms[0].push_back(Eigen::VectorXd::Constant(1, grid[k]));
    const double h = holder_modulus(MeasureFlow::dirac(grid, atoms));
    CHECK(std::isfinite(h));
    // |t - s| / sqrt(t - s) = sqrt(t - s), maximized by the full horizon
    CHECK(h == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("measure flow shape validation") {
    const auto grid = TimeGrid::uniform(1.0, 1);
    std::vector<Measures> ragged;
    ragged.push_back({scalar_measure({0.0}), scalar_measure({1.0})});
    ragged.push_back({scalar_measure({0.0})});
    CHECK_THROWS_AS(MeasureFlow(grid, std::move(ragged)), PopulationCountMismatch);

    std::vector<Measures> short_flow;
    short_flow.push_back({scalar_measure({0.0})});
    CHECK_THROWS_AS(MeasureFlow(grid, std::move(short_flow)), GridMismatch);
}
