#pragma once

#include <stdexcept>
#include <string>

namespace tsan {

// Base class for every error raised by the library. Subclasses map onto the
// CLI exit codes: IoError -> 2, everything else -> 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// A caller broke an operation's precondition (non-scalar loss, missing grads).
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed input data, reported with line/column where known.
class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf produced by a forward op from finite inputs.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace tsan
