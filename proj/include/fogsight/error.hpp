#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace fogsight {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor or raster shapes that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A numeric argument outside its valid domain.
class ParameterError : public Error {
 public:
  using Error::Error;
};

// An operation invoked on an object that is not ready for it.
class StateError : public Error {
 public:
  using Error::Error;
};

// API misuse, e.g. calling backward() on a non-scalar.
class UsageError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  IoError(const std::string& what, std::uint64_t byte_offset)
      : Error(what + " (at byte " + std::to_string(byte_offset) + ")"),
        offset_(byte_offset) {}
  explicit IoError(const std::string& what) : Error(what) {}

  std::uint64_t byte_offset() const { return offset_; }

 private:
  std::uint64_t offset_ = 0;
};

}  // namespace fogsight
