#pragma once

#include <stdexcept>
#include <string>

namespace vilrp {

// Every failure raised by the library derives from Error so callers (and the
// CLI exit-code mapping) can dispatch on the category.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or non-finite user data.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Some sample is not covered by any window (W_n == 0).
class WindowAdmissibilityError : public Error {
 public:
  using Error::Error;
};

// Squared window sum differs from one; unscaled overlap-add is not exact.
class ColaConditionError : public Error {
 public:
  using Error::Error;
};

class PropagationError : public Error {
 public:
  using Error::Error;
};

class StaleSpectrumError : public Error {
 public:
  using Error::Error;
};

class SymmetryError : public Error {
 public:
  using Error::Error;
};

class UnsupportedDomain : public Error {
 public:
  using Error::Error;
};

class TrainingFailure : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class UnsupportedVersion : public ParseError {
 public:
  using ParseError::ParseError;
};

}  // namespace vilrp
