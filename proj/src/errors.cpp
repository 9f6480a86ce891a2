#include "mffbsde/errors.hpp"

namespace mffbsde {

NonFiniteState::NonFiniteState(std::size_t particle_, std::size_t step_, const std::string& what_)
    : SolverError(what_ + " (particle " + std::to_string(particle_) + ", step " +
                  std::to_string(step_) + ")"),
      particle(particle_),
      step(step_) {}

RankDeficientRegression::RankDeficientRegression(std::size_t step_, const std::string& what_)
    : SolverError(what_ + " (step " + std::to_string(step_) + ")"), step(step_) {}

NonFiniteWeight::NonFiniteWeight(std::size_t particle_, std::size_t step_, const std::string& what_)
    : SolverError(what_ + " (particle " + std::to_string(particle_) + ", step " +
                  std::to_string(step_) + ")"),
      particle(particle_),
      step(step_) {}

}  // namespace mffbsde
