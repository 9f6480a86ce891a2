#include <array>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "mffbsde/errors.hpp"
#include "mffbsde/grid.hpp"
#include "mffbsde/parallel.hpp"
#include "mffbsde/rng.hpp"

using namespace mffbsde;

TEST_CASE("philox counter streams are pure functions of their inputs") {
    const auto a = rng::raw_block(42, 1, 7, 9, 0);
    const auto b = rng::raw_block(42, 1, 7, 9, 0);
    CHECK(a == b);

    CHECK(rng::raw_block(42, 1, 7, 9, 0) != rng::raw_block(42, 1, 7, 9, 1));
    CHECK(rng::raw_block(42, 1, 7, 9, 0) != rng::raw_block(42, 1, 7, 10, 0));
    CHECK(rng::raw_block(42, 1, 8, 9, 0) != rng::raw_block(42, 1, 7, 9, 0));
    CHECK(rng::raw_block(42, 2, 7, 9, 0) != rng::raw_block(42, 1, 7, 9, 0));
    CHECK(rng::raw_block(43, 1, 7, 9, 0) != rng::raw_block(42, 1, 7, 9, 0));
}

TEST_CASE("unit mapping stays inside the open interval") {
    CHECK(rng::to_unit(0, 0) > 0.0);
    CHECK(rng::to_unit(0xFFFFFFFFu, 0xFFFFFFFFu) < 1.0);
}

TEST_CASE("normal draws have standard moments") {
    const std::size_t n = 200000;
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t i = 0; i < n; i += 2) {
        const auto [a, b] = rng::normal_pair(2024, rng::stream_id(rng::Stream::Experiment),
                                             static_cast<std::uint32_t>(i), 0, 0);
        sum += a + b;
        sum_sq += a * a + b * b;
    }
    const double mean = sum / static_cast<double>(n);
    const double var = sum_sq / static_cast<double>(n) - mean * mean;
    // 5 sigma bands
    CHECK(std::abs(mean) < 5.0 / std::sqrt(static_cast<double>(n)));
    CHECK(std::abs(var - 1.0) < 5.0 * std::sqrt(2.0 / static_cast<double>(n)));
}

TEST_CASE("fill_normals handles odd lengths") {
    std::vector<double> out(5, 0.0);
    rng::fill_normals(7, rng::stream_id(rng::Stream::Experiment), 0, 0, out);
    for (double v : out) CHECK(std::isfinite(v));

    std::vector<double> again(5, 0.0);
    rng::fill_normals(7, rng::stream_id(rng::Stream::Experiment), 0, 0, again);
    CHECK(out == again);
}

TEST_CASE("uniform grid has exact endpoints") {
    const auto g = TimeGrid::uniform(1.0, 100);
    CHECK(g.points() == 101);
    CHECK(g[0] == 0.0);
    CHECK(g[100] == 1.0);
    CHECK(g.dt(0) == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("from_step rounds the step count") {
    const double pi = 3.14159265358979323846;
    const auto g = TimeGrid::from_step(pi / 4.0, pi / 400.0);
    CHECK(g.steps() == 100);
    CHECK(g.horizon() == pi / 4.0);
}

TEST_CASE("grid validation") {
    CHECK_THROWS_AS(TimeGrid::uniform(-1.0, 10), GridMismatch);
    CHECK_THROWS_AS(TimeGrid::uniform(1.0, 0), LengthMismatch);
    CHECK_THROWS_AS(TimeGrid({0.0, 0.5, 0.5}), GridMismatch);
    CHECK_THROWS_AS(TimeGrid({0.1, 0.5}), GridMismatch);
    CHECK_THROWS_AS(TimeGrid({0.0}), LengthMismatch);

    const auto a = TimeGrid::uniform(1.0, 10);
    const auto b = TimeGrid::uniform(1.0, 20);
    CHECK_THROWS_AS(a.require_same(b, "test"), GridMismatch);
    CHECK_NOTHROW(a.require_same(TimeGrid::uniform(1.0, 10), "test"));
}

TEST_CASE("index_of recovers every grid point and rejects off-grid times") {
    const double pi = 3.14159265358979323846;
    const auto g = TimeGrid::from_step(pi / 4.0, 1e-3);
    for (std::size_t k = 0; k < g.points(); ++k) CHECK(g.index_of(g[k]) == k);
    CHECK_THROWS_AS(g.index_of(0.5 * (g[0] + g[1])), GridMismatch);
    CHECK_THROWS_AS(g.index_of(g.horizon() + 1.0), GridMismatch);
    CHECK_THROWS_AS(g.index_of(-0.1), GridMismatch);
}

TEST_CASE("blocked_reduce is invariant to the worker count") {
    std::vector<double> values(10007);
    for (std::size_t i = 0; i < values.size(); ++i)
        values[i] = rng::to_unit(static_cast<std::uint32_t>(i), 12345u) - 0.5;

    auto run = [&] {
        return par::blocked_reduce(
            values.size(), 0.0,
            [&](std::size_t, std::size_t lo, std::size_t hi) {
                double s = 0.0;
                for (std::size_t i = lo; i < hi; ++i) s += values[i];
                return s;
            },
            [](double a, double b) { return a + b; });
    };

    par::set_max_threads(1);
    const double seq = run();
    par::set_max_threads(4);
    const double par4 = run();
    par::set_max_threads(1);

    // bit-identical, not approximately equal
    CHECK(seq == par4);
}

TEST_CASE("parallel_for covers every index exactly once") {
    std::vector<int> hits(5001, 0);
    par::set_max_threads(4);
    par::parallel_for(hits.size(), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) hits[i] += 1;
    });
    par::set_max_threads(1);
    for (int h : hits) CHECK(h == 1);
}
