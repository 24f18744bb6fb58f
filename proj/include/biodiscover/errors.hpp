#pragma once

#include <stdexcept>
#include <string>

namespace biodiscover {

// Error taxonomy mirrors the process exit codes: config 2, data 3, internal 4.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(what) {}
};

class InternalError : public Error {
 public:
  explicit InternalError(const std::string& what) : Error(what) {}
};

}  // namespace biodiscover
