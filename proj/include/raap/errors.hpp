#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace raap {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A precondition of the called operation does not hold.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent dimensions or fields across records.
class SchemaError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class EmptyMemoryError : public Error {
 public:
  using Error::Error;
};

class NoCorrespondenceError : public Error {
 public:
  using Error::Error;
};

class NoSurfaceError : public Error {
 public:
  using Error::Error;
};

class GeometryError : public Error {
 public:
  using Error::Error;
};

/// A test sample is also present in the retrieval memory.
class LeakageError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace raap
