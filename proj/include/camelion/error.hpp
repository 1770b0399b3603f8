#pragma once

#include <stdexcept>
#include <string>

namespace camelion {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or truncated file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Failure to open, read or write a file.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A precondition on arguments was violated (header mismatch, bad shape, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Valid file that uses a feature this library does not handle.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// A statistic could not be estimated (e.g. empty class).
class EstimationError : public Error {
 public:
  using Error::Error;
};

/// Label geometry does not allow the requested construction.
class GeometryError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Normal equations of a least-squares fit are singular.
class RankError : public Error {
 public:
  using Error::Error;
};

/// Two-class unmixing with identical class intensities.
class DegeneratePairError : public Error {
 public:
  using Error::Error;
};

/// Correlation requested on a sample with zero variance.
class CorrelationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace camelion
