#pragma once

#include <stdexcept>
#include <string>

namespace htmle {

// Error taxonomy shared by every module. The C API maps each class onto a
// status code and the CLI maps status codes onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration: bad flags, unparseable policy strings, bad options.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input data violates a precondition (negative outcome, missing column, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

// A solver failed or produced non-finite values.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace htmle
