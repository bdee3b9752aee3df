#pragma once

#include <stdexcept>
#include <string>

namespace manetl {

// Root of every error the library throws. The CLI maps each family to its
// own exit status.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Tensor extents that do not line up for an operation.
class DimensionError : public Error {
  public:
    using Error::Error;
};

// Invalid hyperparameters, specs or run configuration.
class ConfigError : public Error {
  public:
    using Error::Error;
};

// Bad caller-supplied data (labels out of range, empty splits, ...).
class InputError : public Error {
  public:
    using Error::Error;
};

// Misuse of the autodiff API (backward on a non-scalar, ...).
class UsageError : public Error {
  public:
    using Error::Error;
};

// Malformed or unsupported file contents (BMP, manifest, checkpoint).
class FormatError : public Error {
  public:
    using Error::Error;
};

// NaN/Inf detected in a loss or, in debug mode, any tensor.
class NumericalError : public Error {
  public:
    using Error::Error;
};

}  // namespace manetl
