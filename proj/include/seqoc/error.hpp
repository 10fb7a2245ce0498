#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace seqoc {

/// Broad failure category. The CLI maps each category to an exit code.
enum class ErrorKind { config, data, training, io };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

/// Bad shapes or arguments handed to a numerical routine.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorKind::config, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DimensionError : public DataError {
 public:
  using DataError::DataError;
};

class EmptyInputError : public DataError {
 public:
  using DataError::DataError;
};

class InsufficientDataError : public DataError {
 public:
  using DataError::DataError;
};

class DegenerateLabelsError : public DataError {
 public:
  using DataError::DataError;
};

/// A matrix argument violates a structural precondition (e.g. asymmetric gram).
class ValidationError : public DataError {
 public:
  using DataError::DataError;
};

class DivergenceError : public Error {
 public:
  DivergenceError(int iteration, const std::string& what)
      : Error(ErrorKind::training,
              "training diverged at iteration " + std::to_string(iteration) + ": " + what),
        iteration_(iteration) {}

  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

/// The Cayley system matrix was numerically singular.
class StepFailure : public Error {
 public:
  explicit StepFailure(const std::string& what) : Error(ErrorKind::training, what) {}
};

class NoMarginVectorError : public Error {
 public:
  explicit NoMarginVectorError(const std::string& what)
      : Error(ErrorKind::training, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

}  // namespace seqoc
