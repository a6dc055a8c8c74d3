#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace matchlab {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Input outside the mathematical domain of an operation (t <= 0, origin of a
/// singular kernel, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A requested accuracy cannot be met within the configured resources.
class AccuracyError : public Error {
 public:
  using Error::Error;
};

/// Iterative solver failed to reach its tolerance. Carries the residual
/// history so callers can report where it stalled.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> residuals)
      : Error(what), residuals_(std::move(residuals)) {}

  const std::vector<double>& residuals() const noexcept { return residuals_; }

 private:
  std::vector<double> residuals_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace matchlab
