#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace xrda {

/// Invalid configuration: duplicate names, zero extents, bad config keys.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A precondition on a function argument was violated.
class ArgumentError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed input data (labels out of range, unreadable dataset rows).
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values reached the optimizer.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Checkpoint decoding failure. `offset()` is the byte position where
/// decoding stopped.
class FormatError : public std::runtime_error {
public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

private:
  std::uint64_t offset_;
};

}  // namespace xrda
