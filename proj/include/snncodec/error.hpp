#pragma once

#include <stdexcept>
#include <string>

namespace snncodec {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes or time-axis lengths that do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A precondition of an operation was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// NaN or infinity where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed dataset or checkpoint bytes.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid model or run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Training diverged; the message carries epoch and batch context.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace snncodec
