#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace omnistereo {

/// Base for all library errors. Callers that only care about failure catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Undefined angle, coincident camera centers, bad shapes and similar numeric failures.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated input file. `offset` is the byte position where parsing stopped.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), message_(what), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }
  /// The message without the offset suffix.
  const std::string& message() const noexcept { return message_; }

 private:
  std::string message_;
  std::size_t offset_;
};

}  // namespace omnistereo
