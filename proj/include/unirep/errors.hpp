#pragma once

#include <stdexcept>
#include <string>

namespace unirep {

// Base for every error raised by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes that do not agree at an API boundary.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value. `key()` names the offending config key when known.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message, std::string key = {})
      : Error(message), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

// Inputs that are well-formed but semantically wrong (labels out of range, missing files).
class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite values during optimization.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace unirep
