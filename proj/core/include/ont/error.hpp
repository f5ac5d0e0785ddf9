#pragma once

#include <stdexcept>
#include <string>

namespace ont {

// Base for everything this library throws.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad configuration, bad arguments, violated preconditions. CLI exit code 2.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Failures while processing data: unreadable files, malformed containers,
// numerical divergence. CLI exit code 3.
class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error(msg) {}
};

}  // namespace ont
