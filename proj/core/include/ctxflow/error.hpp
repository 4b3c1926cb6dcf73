#pragma once

#include <stdexcept>
#include <string>

namespace ctxflow {

// Base for every recoverable data problem. The CLI maps these to exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FileNotFound : public DataError {
 public:
  explicit FileNotFound(const std::string& path)
      : DataError("file not found: " + path) {}
};

class MalformedCapture : public DataError {
 public:
  using DataError::DataError;
};

class EmptyFlow : public DataError {
 public:
  EmptyFlow() : DataError("cannot encapsulate an empty packet list") {}
};

class UnknownVariant : public DataError {
 public:
  explicit UnknownVariant(const std::string& name)
      : DataError("unknown variant: " + name) {}
};

class DegenerateData : public DataError {
 public:
  using DataError::DataError;
};

class MaskMismatch : public DataError {
 public:
  using DataError::DataError;
};

class FormatError : public DataError {
 public:
  using DataError::DataError;
};

// Invalid configuration supplied by the caller. The CLI maps this to exit code 1.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace ctxflow
