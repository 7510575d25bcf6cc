#pragma once

#include <stdexcept>
#include <string>

namespace fedsl {

// Shape disagreement between tensors / layers.
struct DimensionError : std::invalid_argument {
  explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

// Bad argument value (out-of-range label, invalid config value, ...).
struct InputError : std::invalid_argument {
  explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

// Malformed or inconsistent wire message.
struct ProtocolError : std::runtime_error {
  explicit ProtocolError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fedsl
