#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace overlapsim {

// Invalid user-supplied configuration. `key()` names the offending setting
// when one can be identified.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& message)
      : std::runtime_error(message) {}
  ConfigError(std::string key, const std::string& message)
      : std::runtime_error(key + ": " + message), key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

// Broken internal invariant (length mismatch, missing snapshot, ...).
// Indicates a bug, never bad input.
class InternalError : public std::logic_error {
 public:
  explicit InternalError(const std::string& message)
      : std::logic_error(message) {}
};

// A NaN/Inf showed up in a loss, gradient or parameter vector.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& message, std::int64_t step = -1)
      : std::runtime_error(message), step_(step) {}

  std::int64_t step() const noexcept { return step_; }

 private:
  std::int64_t step_;
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& message) : std::runtime_error(message) {}
};

}  // namespace overlapsim
