#pragma once

#include <stdexcept>
#include <string>

namespace sleepstate {

// Process exit codes used by the CLI.
enum class ExitCode : int {
  ok = 0,
  validation = 2,
  numerical = 3,
  invariant = 4,
};

// Bad input, bad configuration, I/O problems.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Sampler or estimator hit a numerically impossible state.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An internal consistency check failed.
class InvariantViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sleepstate
