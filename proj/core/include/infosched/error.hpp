#pragma once

#include <stdexcept>
#include <string>

namespace infosched {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or violated precondition on user-supplied input.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Unknown catalog entry, session, or artifact.
class NotFoundError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure: non-finite model output, blow-up, non-convergence,
/// impossible data.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A chain step whose stay-probability would be negative somewhere on the grid.
class StabilityError : public ConfigError {
 public:
  StabilityError(const std::string& what, double max_stable_delta)
      : ConfigError(what), max_stable_delta_(max_stable_delta) {}

  double max_stable_delta() const noexcept { return max_stable_delta_; }

 private:
  double max_stable_delta_;
};

/// Request that cannot be honored in the current state of a session or
/// schedule (budget spent, horizon reached, time going backwards).
class StateError : public Error {
 public:
  using Error::Error;
};

}  // namespace infosched
