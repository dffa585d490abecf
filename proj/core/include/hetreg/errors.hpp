#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hetreg {

// Base for every error raised by the library. Callers that only care about
// "something went wrong in hetreg" can catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Vector/matrix lengths that do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A value outside the mathematical domain of an operation (rho = 1, Lambda <= 0, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Structural problems with input files: missing or duplicated columns, bad keys.
class SchemaError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t row, std::size_t column)
      : Error(what), row_(row), column_(column) {}

  std::size_t row() const noexcept { return row_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

// Objective became NaN/Inf during optimization.
class DivergedError : public Error {
 public:
  DivergedError(const std::string& what, long long epoch) : Error(what), epoch_(epoch) {}

  long long epoch() const noexcept { return epoch_; }

 private:
  long long epoch_;
};

}  // namespace hetreg
