#pragma once

#include <stdexcept>
#include <string>

namespace risce {

enum class ErrorKind {
  invalid_argument,
  insufficient_pilot_length,
  format,
  truncation,
  divergence,
  io,
  usage,
};

/// Base exception for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what)
      : Error(ErrorKind::invalid_argument, what) {}
};

class InsufficientPilotLength : public Error {
 public:
  explicit InsufficientPilotLength(const std::string& what)
      : Error(ErrorKind::insufficient_pilot_length, what) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(ErrorKind::format, what) {}
};

class TruncationError : public Error {
 public:
  explicit TruncationError(const std::string& what)
      : Error(ErrorKind::truncation, what) {}
};

class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what)
      : Error(ErrorKind::divergence, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

/// Process exit code for a failure of the given kind (CLI contract).
inline int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::usage:
      return 2;
    case ErrorKind::format:
    case ErrorKind::truncation:
      return 3;
    case ErrorKind::divergence:
      return 4;
    default:
      return 1;
  }
}

namespace detail {
inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}
}  // namespace detail

}  // namespace risce
