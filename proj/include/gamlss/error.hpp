#pragma once

#include <stdexcept>
#include <string>

namespace gamlss {

// Base of every error raised by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A precondition on user-supplied input was violated (domain, shape, schema).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// Configuration file or formula string could not be interpreted.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Data file content violates its declared schema.
class DataError : public Error {
 public:
  using Error::Error;
};

// A model could not be estimated (singular system, degenerate design).
class EstimationError : public Error {
 public:
  using Error::Error;
};

// A distributional functional does not exist for the given parameters,
// e.g. the mean of a Singh-Maddala law with a*q <= 1.
class MomentError : public Error {
 public:
  using Error::Error;
};

// Bootstrap summary refused because too many replicates failed or too few
// succeeded.
class InferenceBlocked : public Error {
 public:
  using Error::Error;
};

}  // namespace gamlss
