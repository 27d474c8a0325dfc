#pragma once

#include <stdexcept>
#include <string>

namespace gfn4rec {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mismatched dimensions between related values (responses vs. behaviors, etc.).
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A caller violated an operation's precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent configuration. CLI exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unusable input data. CLI exit code 3.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss during training. CLI exit code 4.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::string snapshot)
      : Error(what), snapshot_(std::move(snapshot)) {}

  /// JSON text describing the state at the point of divergence.
  const std::string& snapshot() const noexcept { return snapshot_; }

 private:
  std::string snapshot_;
};

}  // namespace gfn4rec
