#pragma once

#include <stdexcept>
#include <string>

namespace zrpperc {

/// Base of every error raised by the library. The CLI maps subclasses to
/// exit codes: validation-type errors exit 2, solver failures exit 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Series evaluated at or beyond the radius of convergence.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class SolverError : public Error {
 public:
  using Error::Error;
};

}  // namespace zrpperc
