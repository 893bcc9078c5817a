// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dmesr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible with the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A malformed line in an input file.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A persisted record failed its integrity checks.
class CorruptRecord : public Error {
 public:
  using Error::Error;
};

/// A description or embedding provider failed after its retry budget.
class ProviderError : public Error {
 public:
  ProviderError(const std::string& what, int status)
      : Error(what + " (last status " + std::to_string(status) + ")"), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

}  // namespace dmesr
