#pragma once

#include <stdexcept>
#include <string>

namespace drfos {

// Base for all library failures. The CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input data violates a documented invariant (bad CSV, single arm, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A numerical routine could not produce a trustworthy answer.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Malformed or out-of-range configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace drfos
