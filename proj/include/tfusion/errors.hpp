#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tfusion {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not conform.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Input is well-formed but numerically degenerate (zero row, empty cluster, ...).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

// Caller supplied an invalid configuration or parameter value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// API misuse, e.g. asking a tape for the gradient of a foreign variable.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Requested work is outside what an oracle supports.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

// A NaN or Inf appeared where the contract forbids it.
class NonFiniteError : public Error {
 public:
  NonFiniteError(const std::string& what, std::size_t index)
      : Error(what), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

// Malformed file contents.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace tfusion
