#pragma once

#include <stdexcept>
#include <string>

namespace dlpt {

// Base of every library error. The CLI maps each subclass to an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

// Structured training with fewer design levels than polynomial terms.
class IdentifiabilityError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, int step)
      : NumericalError(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

class SingularityError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class MprUndefined : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace dlpt
