#ifndef TFMASK_ERROR_H_
#define TFMASK_ERROR_H_

#include <stdexcept>
#include <string>

namespace tfmask {

// Base class for every error raised by the library. The CLI maps the
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration or arguments (exit code 1).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed, missing or inconsistent data (exit code 2).
class DataError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf or divergence during a numerical procedure (exit code 3).
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace tfmask

#endif  // TFMASK_ERROR_H_
