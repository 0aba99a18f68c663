#pragma once

#include <stdexcept>
#include <string>

namespace factorlab {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad arguments, malformed recipes, out-of-range parameters.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Panels whose asset sets do not match.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

/// Missing files, parse failures, inconsistent persisted data.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Failures while computing (rank deficiency, empty overlap, ...).
class ComputeError : public Error {
 public:
  using Error::Error;
};

}  // namespace factorlab
