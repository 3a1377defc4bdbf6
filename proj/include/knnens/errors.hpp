#pragma once

#include <stdexcept>
#include <string>

namespace knnens {

/// Invalid argument to an operation (k out of range, bad dimension, ...).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid or degenerate configuration (ensemble, sampler, experiment).
class ConfigurationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Zero or near-zero neighbor distance in strict mode.
class DegeneracyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure in a solver or quadrature routine.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace knnens
