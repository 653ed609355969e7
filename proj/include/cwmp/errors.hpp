#pragma once

#include <stdexcept>
#include <string>

namespace cwmp {

// Bad configuration: dimension mismatches, non-positive costs, invalid
// hyper-parameters, impossible partitions.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Bad data handed to an otherwise valid configuration (empty batch,
// out-of-range label, malformed CSV row).
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cwmp
