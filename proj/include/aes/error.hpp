#pragma once

#include <stdexcept>
#include <string>

namespace aes {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A state object violates its own invariants (non-finite accumulators, nu <= 0, ...).
class InvalidState : public Error {
 public:
  using Error::Error;
};

/// Caller-supplied data is out of domain (negative loss, NaN, empty batch).
class DataError : public Error {
 public:
  using Error::Error;
};

/// An internal contract was broken, e.g. feedback for a slot sampled with probability zero.
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

/// Sampling was requested before the buffer was warmed up.
class NotReady : public Error {
 public:
  using Error::Error;
};

/// Configuration rejected; the message names the offending key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// The numeric simplex minimizer hit its iteration cap.
class OracleFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace aes
