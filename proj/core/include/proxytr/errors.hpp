#pragma once

#include <stdexcept>
#include <string>

namespace proxytr {

/// Operand shapes are incompatible with the requested operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An argument lies outside the operation's domain (counts, indices, thresholds).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Input geometry is valid but degenerate (all points identical, nothing visible).
class DegenerateInputError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// An API was called out of contract (non-scalar loss, misaligned lists).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by the training loop when a loss term stops being finite.
class NonFiniteLossError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace proxytr
