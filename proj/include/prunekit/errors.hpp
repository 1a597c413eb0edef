#pragma once

#include <stdexcept>
#include <string>

namespace prunekit {

// Parameter outside the mathematically valid region (e.g. Psi^2 <= 0).
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// Iterative routine exhausted its budget without reaching the requested
// accuracy; carries the best available estimate.
struct AccuracyError : std::runtime_error {
  AccuracyError(const std::string& what, double best_estimate)
      : std::runtime_error(what), best(best_estimate) {}
  double best;
};

// The optimization problem has no feasible point (non-separable data, or no
// physical region for the requested parameters).
struct InfeasibleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace prunekit
