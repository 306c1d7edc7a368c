#pragma once

#include <stdexcept>
#include <string>

namespace emoflow {

// Exception hierarchy shared by every module. The CLI maps each family to an
// exit code (config 2, data 3, numeric/training 4).

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingError : public NumericError {
 public:
  TrainingError(const std::string& what, long step)
      : NumericError(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

using ArgumentError = std::invalid_argument;

}  // namespace emoflow
