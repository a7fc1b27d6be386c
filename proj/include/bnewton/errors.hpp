#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bnewton {

// Base class for every error thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed caller input (non-finite data, impossible dimensions, bad config).
class InvalidInputError : public Error {
 public:
  using Error::Error;
};

// An iterative QP kernel hit its iteration cap.  Carries the best feasible
// simplex weights found so far.
class SolverFailureError : public Error {
 public:
  SolverFailureError(const std::string& what, std::vector<double> best)
      : Error(what), best_iterate(std::move(best)) {}

  std::vector<double> best_iterate;
};

// A bundle operation would produce coinciding reference points.
class DegenerateBundleError : public Error {
 public:
  using Error::Error;
};

// The equality constraints of a Newton subproblem are numerically
// rank-deficient (affinely dependent gradients).
class DegenerateConstraintsError : public Error {
 public:
  using Error::Error;
};

// A linear system was singular to working precision.
class SingularSystemError : public Error {
 public:
  SingularSystemError(const std::string& what, double condition)
      : Error(what), condition_estimate(condition) {}

  double condition_estimate;
};

// The equality-constrained quadratic subproblem is unbounded below.
class UnboundedSubproblemError : public Error {
 public:
  using Error::Error;
};

// Fewer candidate points than the requested bundle size.
class InsufficientCandidatesError : public Error {
 public:
  using Error::Error;
};

// Candidate subset selection could not produce affinely independent gradients.
class DegenerateCandidatesError : public Error {
 public:
  using Error::Error;
};

// A random problem generator exhausted its resampling budget.
class GenerationFailureError : public Error {
 public:
  using Error::Error;
};

}  // namespace bnewton
