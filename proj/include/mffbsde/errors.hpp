#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mffbsde {

/// Base class for all solver failures. Catching this is enough to map any
/// library error onto a process exit code.
struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EmptySamples : SolverError {
    using SolverError::SolverError;
};

struct NegativeWeight : SolverError {
    using SolverError::SolverError;
};

struct LengthMismatch : SolverError {
    using SolverError::SolverError;
};

struct DimensionMismatch : SolverError {
    using SolverError::SolverError;
};

struct PopulationCountMismatch : SolverError {
    using SolverError::SolverError;
};

struct GridMismatch : SolverError {
    using SolverError::SolverError;
};

struct IndexOutOfRange : SolverError {
    using SolverError::SolverError;
};

/// sigma * sigma^T not invertible at the requested point.
struct SingularDiffusion : SolverError {
    using SolverError::SolverError;
};

/// A simulated state left the representable range. Carries the offending
/// particle and step so the caller can localize the blow-up.
struct NonFiniteState : SolverError {
    std::size_t particle;
    std::size_t step;
    NonFiniteState(std::size_t particle_, std::size_t step_, const std::string& what_);
};

/// Normal equations singular beyond the ridge floor (e.g. constant paths
/// with a degree >= 1 basis).
struct RankDeficientRegression : SolverError {
    std::size_t step;
    RankDeficientRegression(std::size_t step_, const std::string& what_);
};

struct NonFiniteWeight : SolverError {
    std::size_t particle;
    std::size_t step;
    NonFiniteWeight(std::size_t particle_, std::size_t step_, const std::string& what_);
};

struct ControlOutOfSet : SolverError {
    using SolverError::SolverError;
};

struct NonConvergence : SolverError {
    using SolverError::SolverError;
};

struct MissingGradient : SolverError {
    using SolverError::SolverError;
};

struct ClipViolation : SolverError {
    using SolverError::SolverError;
};

/// Scenario configuration rejected; message names the offending field.
struct SchemaError : SolverError {
    using SolverError::SolverError;
};

struct UnknownBundle : SolverError {
    using SolverError::SolverError;
};

}  // namespace mffbsde
