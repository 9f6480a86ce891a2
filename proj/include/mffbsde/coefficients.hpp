#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mffbsde/measure.hpp"

namespace mffbsde {

/// Coefficient signatures. States live in R^m, backward values in R^n,
/// noise in R^d, and the measure argument carries one empirical marginal per
/// population (all populations, not just the owner's).
using StateDriftFn = std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>;
using CoupledDriftFn =
    std::function<Eigen::VectorXd(double, const Eigen::VectorXd&, const Eigen::VectorXd&,
                                  const Eigen::MatrixXd&, const Measures&)>;
using DiffusionFn = std::function<Eigen::MatrixXd(double, const Eigen::VectorXd&)>;
using DriverFn = CoupledDriftFn;
using TerminalFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Measures&)>;

/// One population's forward-backward coefficients:
///   dX = (h(t,X) + b(t,X,Y,Z,mu)) dt + sigma(t,X) dW
///   dY = -f(t,X,Y,Z,mu) dt + Z dW,   Y_T = g(X_T, mu_T)
/// h may grow linearly; b, f, g are expected bounded / of declared growth so
/// the change-of-measure decoupling stays well behaved.
struct CoefficientBundle {
    int state_dim = 1;
    int value_dim = 1;
    int noise_dim = 1;

    StateDriftFn h;
    CoupledDriftFn b;
    DiffusionFn sigma;
    DriverFn f;
    TerminalFn g;

    // declared assumption constants, checked by validate_assumptions
    double growth_constant = 1.0;
    double growth_exponent = 1.0;
    double ellipticity = 1.0;  // eps: eps^-1 |v|^2 <= v' sigma sigma' v <= eps |v|^2
};

/// The coupled system: one bundle and one initial state per population.
struct PopulationSystem {
    std::vector<CoefficientBundle> populations;
    std::vector<Eigen::VectorXd> initial_states;

    std::size_t size() const { return populations.size(); }
    void validate() const;
};

/// sigma' (sigma sigma')^{-1} b: the drift pulled back through the noise.
/// Throws SingularDiffusion when sigma sigma' is numerically singular.
Eigen::VectorXd reduced_drift(const CoefficientBundle& c, double t, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& y, const Eigen::MatrixXd& z,
                              const Measures& measures);

/// f + z * reduced_drift: the driver of the decoupled backward equation.
Eigen::VectorXd shifted_driver(const CoefficientBundle& c, double t, const Eigen::VectorXd& x,
                               const Eigen::VectorXd& y, const Eigen::MatrixXd& z,
                               const Measures& measures);

/// Probe set for assumption checks. Defaults derive states from the initial
/// points; directions, probe measures and jitters come from the seed.
struct ProbeSpec {
    std::vector<double> times;
    std::vector<double> state_offsets{0.0, 1.0, -1.0, 5.0, -5.0};
    std::vector<double> value_levels{0.0, 1.0, -1.0, 5.0};
    std::vector<double> gradient_levels{0.0, 1.0, -1.0};
    int directions = 16;
    int measure_samples = 128;
    int jitter_levels = 5;
    double jitter_scale = 0.1;
    std::uint64_t seed = 1;

    static ProbeSpec defaults(const TimeGrid& grid);
};

struct ValidationEntry {
    std::string check;
    std::size_t population = 0;
    bool passed = false;
    double observed = 0.0;
    double bound = 0.0;
    std::string detail;
};

struct ValidationReport {
    std::vector<ValidationEntry> entries;
    bool all_passed() const;
};

/// Sampled falsifier for the standing assumptions: two-sided ellipticity,
/// drift boundedness, growth of f and g, and continuity in the measure
/// argument (outputs must settle as sample jitter shrinks). A PASS is
/// evidence, not proof; a FAIL is definitive at the probe point.
ValidationReport validate_assumptions(const PopulationSystem& system, const ProbeSpec& spec);

}  // namespace mffbsde
