#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vtec {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text. Carries the 1-based line number when known (0 otherwise).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Invalid configuration, arguments or preconditions.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failures.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Missing table entries and out-of-range lookups.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values during training or prediction.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace vtec
