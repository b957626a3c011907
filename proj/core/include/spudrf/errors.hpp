#pragma once

#include <stdexcept>
#include <string>

namespace spudrf {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent shapes or invalid configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite or otherwise invalid input data.
class InputError : public Error {
 public:
  using Error::Error;
};

/// API misuse: stale caches, out-of-range ids, empty inputs.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Non-finite gradients, diverging loss.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed CSV/JSON input. The message names the line or key.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// File system failures, with the path in the message.
class IoError : public Error {
 public:
  using Error::Error;
};

/// The self-paced schedule cannot proceed (empty selection, past final pace).
class SchedulingError : public Error {
 public:
  using Error::Error;
};

}  // namespace spudrf
