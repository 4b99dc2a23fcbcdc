#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sigma {

/// Base class for every error raised by the library. The CLI maps the
/// concrete subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or lengths disagree with what an operation expects.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A computation produced a non-finite value or hit a singular matrix.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Cholesky factorization met a non-positive pivot.
class NotPositiveDefinite : public NumericError {
 public:
  NotPositiveDefinite(std::size_t pivot, double value)
      : NumericError("matrix is not positive definite: pivot " + std::to_string(pivot) +
                     " has value " + std::to_string(value)),
        pivot_(pivot) {}

  std::size_t pivot() const noexcept { return pivot_; }

 private:
  std::size_t pivot_;
};

/// Invalid user configuration or malformed input description.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A federated round could not complete: a client message was missing,
/// duplicated, or out of round.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// File could not be read, written, or parsed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace sigma
