#pragma once

#include <stdexcept>
#include <string>

namespace srsim {

/// Bad argument value (out of the physically/mathematically valid range).
struct DomainError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Structured input (config file, trace, ensemble spec) failed validation.
/// The message carries a field path, e.g. "grid.n_points: must be >= 2".
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Propagation produced non-finite values or populations below tolerance.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A fit could not be performed or did not converge.
struct FitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// File could not be read or written.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace srsim
