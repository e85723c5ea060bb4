#pragma once

#include <stdexcept>
#include <string>

namespace classrecon {

// Each error family maps onto one CLI exit code (see tools/classrecon.cpp).

/// Invalid configuration, bad arguments, or malformed input files.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dataset layout or count validation failure.
class DatasetError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// A pipeline stage needs an artifact that does not exist yet, or would
/// overwrite one that does.
class PrerequisiteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite loss, gradient, or intermediate value.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace classrecon
