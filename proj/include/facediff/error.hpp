#pragma once

#include <stdexcept>
#include <string>

namespace facediff {

// Base of every error thrown by the library. The CLI maps ConfigError and
// UsageError to exit code 2, everything else to 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class StepError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

// Audio or dataset input that cannot be turned into features.
class IngestionError : public Error {
 public:
  using Error::Error;
};

// Training diverged (non-finite loss).
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace facediff
