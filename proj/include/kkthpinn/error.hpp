#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kkthpinn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A symmetric factorization hit a non-positive pivot.
class SingularityError : public Error {
 public:
  SingularityError(const std::string& what, std::size_t pivot)
      : Error(what), pivot_(pivot) {}
  std::size_t pivot() const noexcept { return pivot_; }

 private:
  std::size_t pivot_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Bad sample values: non-finite entries, empty partitions, nothing left after filtering.
class DataError : public Error {
 public:
  using Error::Error;
};

class ScaleError : public Error {
 public:
  using Error::Error;
};

/// Raised when an optimizer step sees a non-finite loss or gradient.
class TrainingError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class PathError : public Error {
 public:
  using Error::Error;
};

}  // namespace kkthpinn
