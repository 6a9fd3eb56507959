#pragma once

#include <stdexcept>
#include <string>

namespace slutsky {

// Configuration problems map to exit code 2, numerical failures to exit code 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const { return 3; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 2; }
};

class VariantError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class DimensionMismatch : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class UnsupportedSize : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class MissingMoments : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class NonPositiveQuantity : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class NoConvergence : public Error {
 public:
  using Error::Error;
};

class SingularHessian : public Error {
 public:
  using Error::Error;
};

class CalibrationFailure : public Error {
 public:
  using Error::Error;
};

class EigSolverFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace slutsky
