#pragma once

#include <stdexcept>
#include <string>

namespace tbal {

// Bad arguments or configuration (maps to the CLI usage exit code).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or unreadable input files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Base for failures of the numerics themselves.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SingularCovarianceError : public NumericalError {
 public:
  SingularCovarianceError(const std::string& what, double condition_number)
      : NumericalError(what), condition_number_(condition_number) {}
  double condition_number() const { return condition_number_; }

 private:
  double condition_number_;
};

class AcceptanceFailure : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class DegenerateOutcomeError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class InsufficientSamplesError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace tbal
