#pragma once

#include <stdexcept>
#include <string>

namespace preqmdl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent or out-of-range configuration (bad flags, bad hyperparameters).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed, inconsistent or non-finite data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Score-cache problems: missing entries, hash mismatches, unreadable files.
class CacheError : public Error {
 public:
  using Error::Error;
};

/// Request exceeds what the library is willing to enumerate.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// An internal invariant was found broken (e.g. a cycle in a Dag).
class InvariantError : public Error {
 public:
  using Error::Error;
};

}  // namespace preqmdl
