#pragma once

#include <stdexcept>
#include <string>

namespace attntul {

// Malformed or inconsistent input data (bad records, out-of-range
// coordinates, missing pipeline artifacts). CLI maps these to exit code 2.
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration values or unknown keys. CLI maps these to exit code 1.
class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

// A pipeline stage ran before the stage it depends on.
class StageError : public DataError {
public:
  StageError(const std::string& missing, const std::string& stage)
      : DataError(missing + " not found; run `" + stage + "` first"),
        stage_(stage) {}

  const std::string& stage() const noexcept { return stage_; }

private:
  std::string stage_;
};

// Tensor shape disagreement inside a numeric primitive.
class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

// Training produced a non-finite loss or gradient.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace attntul
