#pragma once

#include <stdexcept>
#include <string>

namespace lmc {

// Base class for all errors thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Argument outside its mathematical domain (e.g. |t| > 1 for the kernel).
struct DomainError : Error {
  using Error::Error;
};

// Matrix dimensions inconsistent with the problem configuration.
struct ShapeError : Error {
  using Error::Error;
};

// Operation is undefined in the requested regime (e.g. manifold operations
// in the under-realized case m < M).
struct RegimeError : Error {
  using Error::Error;
};

// Exact computation refused because the instance is too large for it.
struct SizeError : Error {
  using Error::Error;
};

// Invalid configuration value or malformed input file.
struct ConfigError : Error {
  using Error::Error;
};

// A weight matrix does not have the structure required for classification.
// Carries the index of the first offending row.
struct ClassificationError : Error {
  int row;
  ClassificationError(int row_, const std::string& what)
      : Error(what), row(row_) {}
};

// Training left the basin of attraction. Carries the iteration at which
// divergence was detected.
struct DivergenceError : Error {
  long long iteration;
  DivergenceError(long long iteration_, const std::string& what)
      : Error(what), iteration(iteration_) {}
};

}  // namespace lmc
