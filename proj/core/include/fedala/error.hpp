#pragma once

#include <stdexcept>
#include <string>

namespace fedala {

// Base of every error thrown by the simulator core.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape mismatch or otherwise malformed arguments.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Operation called on an object in the wrong state (e.g. a stale forward cache).
class InvalidState : public Error {
 public:
  using Error::Error;
};

// NaN/Inf detected in parameters, features, or a loss value.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration. `key()` names the offending key when known.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error(key.empty() ? what : key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class PartitionError : public Error {
 public:
  using Error::Error;
};

class SplitError : public Error {
 public:
  using Error::Error;
};

// Malformed input file. `line()` is 1-based; 0 when not line-specific.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

}  // namespace fedala
