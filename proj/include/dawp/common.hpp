#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dawp {

/// Invalid argument to an operation (bad shape, out-of-range index, NaN coordinate).
class ArgumentError : public std::invalid_argument {
 public:
  explicit ArgumentError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Malformed on-disk data. Carries the byte offset where parsing failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& msg, std::uint64_t byte_offset)
      : std::runtime_error(msg + " (byte offset " + std::to_string(byte_offset) + ")"),
        offset(byte_offset) {}
  std::uint64_t offset;
};

/// Degenerate statistics (all-NaN channel, zero variance).
class StatisticsError : public std::runtime_error {
 public:
  explicit StatisticsError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A runtime contract was violated (double write, empty loss mask, ...).
class ContractError : public std::logic_error {
 public:
  explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

/// Bad run configuration (unknown key, inconsistent preset override).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numeric failure during training/inference (NaN loss).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace dawp
