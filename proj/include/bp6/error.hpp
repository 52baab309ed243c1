#pragma once

#include <stdexcept>
#include <string>

namespace bp6 {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad argument to a design or transform routine (cutoff above Nyquist, etc).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Tensor shape incompatibility inside a primitive or layer.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite or implausible input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// An iterative numerical routine produced NaN/Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Recording or annotation files do not match the expected channel schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Malformed delimited text (ragged rows, unparsable numbers).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Binary file with the wrong magic or version.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Binary file that is truncated or fails its checksum.
class CorruptStoreError : public Error {
 public:
  using Error::Error;
};

/// Caller violated an operation's precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Configuration value missing, malformed or inconsistent.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace bp6
