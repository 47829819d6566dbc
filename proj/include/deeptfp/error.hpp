#pragma once

#include <stdexcept>
#include <string>

namespace deeptfp {

/// Base class for every error raised by the library. The category decides the
/// process exit code used by the command-line tool.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid tensor shapes or arguments passed to a kernel.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed, inconsistent or insufficient input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Raised when training diverges (non-finite loss or gradients).
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Not enough observed history before a requested prediction time.
class HistoryError : public Error {
 public:
  using Error::Error;
};

}  // namespace deeptfp
