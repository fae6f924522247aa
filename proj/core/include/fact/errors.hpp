#pragma once

#include <stdexcept>
#include <string>

namespace fact {

// Shape or dimension disagreement between tensors/layers.
class DimensionError : public std::invalid_argument {
 public:
  explicit DimensionError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Invalid argument value (out-of-range label, bad weights, ...).
class InputError : public std::invalid_argument {
 public:
  explicit InputError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Invalid or inconsistent configuration (empty dataset, too few clients, ...).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed on-disk data (bad magic, truncated payload, ...).
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Violation of the federation protocol contract.
class ProtocolError : public std::runtime_error {
 public:
  explicit ProtocolError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values where finiteness is promised; aborts the offending step.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace fact
