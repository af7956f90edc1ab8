#pragma once

#include <stdexcept>
#include <string>

namespace sitvos {

// Shape/extent violations (mismatched operands, non-integral conv output, ...).
struct DimensionError : std::runtime_error {
  explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Precondition violations that are not shape related (bad ranges, non-scalar
// loss, out-of-range mask values, ...).
struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Missing key / frame index lookups.
struct LookupError : std::runtime_error {
  explicit LookupError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed files (PNG, checkpoint container, config).
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace sitvos
