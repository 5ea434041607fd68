#pragma once

#include <stdexcept>
#include <string>

namespace gdance {

// Error classes map to the CLI exit codes in tools/main.cpp:
//   ConfigError -> 2, IoError -> 3, NumericError -> 4, everything else -> 1.

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error("config: " + msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error("io: " + msg) {}
};

// Shape conformance failures; message names both shapes.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error("shape: " + msg) {}
};

// Non-finite values, degenerate inputs, out-of-range numeric arguments.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error("numeric: " + msg) {}
};

struct ValueError : std::runtime_error {
  explicit ValueError(const std::string& msg) : std::runtime_error("value: " + msg) {}
};

}  // namespace gdance
