#pragma once

#include <stdexcept>
#include <string>

namespace evnet {

// Base for all library errors. The CLI maps each subclass to its own exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input or a violated model invariant (bad scenario, bad arguments).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A solver hit its iteration cap or diverged.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

// A problem instance has no feasible point.
class InfeasibleError : public Error {
 public:
  InfeasibleError(const std::string& what, double max_violation)
      : Error(what), max_violation_(max_violation) {}

  double max_violation() const noexcept { return max_violation_; }

 private:
  double max_violation_;
};

}  // namespace evnet
