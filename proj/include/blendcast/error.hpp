#pragma once

#include <stdexcept>
#include <string>

namespace blendcast {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad or inconsistent input data. The CLI maps these to exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Malformed text input, carrying the 1-based line number.
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : ValidationError(file + ":" + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Series whose scale denominator is zero (constant history).
class DegenerateSeriesError : public Error {
 public:
  using Error::Error;
};

// Argument outside a function's mathematical domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace blendcast
