#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace gapcert {

/// Violated precondition or invalid configuration (bad n, D, theorem domain).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A dimension or enumeration size exceeds a configured limit.
class LimitError : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// Malformed model file. Carries the 1-based line and column of the fault.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column)
      : std::runtime_error("line " + std::to_string(line) + ", column " +
                           std::to_string(column) + ": " + what),
        line_(line),
        column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

/// Eigensolver failed to converge or produced an unusable result.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

// base^exp, saturating at `cap + 1` so callers can compare against `cap`.
inline std::uint64_t checked_pow(std::uint64_t base, std::uint64_t exp,
                                 std::uint64_t cap) {
  std::uint64_t result = 1;
  for (std::uint64_t i = 0; i < exp; ++i) {
    if (base != 0 && result > cap / base) return cap + 1;
    result *= base;
  }
  return result;
}

}  // namespace detail
}  // namespace gapcert
