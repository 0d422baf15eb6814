#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sild {

// Base for every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A dataset directory is missing a file or a file is unreadable.
class LoadError : public Error {
 public:
  using Error::Error;
};

// Data violates a structural invariant (index range, duplicates, split bounds).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Incompatible tensor shapes handed to a primitive.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Bad user configuration (CLI flags, RunConfig JSON, generator settings).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A non-finite value appeared where a finite one is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public NumericError {
 public:
  DivergenceError(std::size_t epoch, const std::string& what)
      : NumericError("diverged at epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}

  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

}  // namespace sild
