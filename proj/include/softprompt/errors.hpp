#pragma once

#include <stdexcept>
#include <string>

namespace softprompt {

// Error taxonomy. Everything derives from Error so callers can catch the
// whole family at the CLI boundary and map it to exit code 1.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid argument values (bad ids, mismatched shapes, k > population, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Input data problems: empty datasets, malformed corpora.
class DatasetError : public Error {
 public:
  using Error::Error;
};

// Sequence capacity exceeded (max_positions overflow).
class CapacityError : public Error {
 public:
  using Error::Error;
};

// Incompatible artifacts (agent width != model width, version mismatch).
class CompatibilityError : public Error {
 public:
  using Error::Error;
};

// Bad run configuration (regime/parameter-state mismatch, invalid dims).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// File I/O failures and corrupt containers.
class IoError : public Error {
 public:
  using Error::Error;
};

// Training went off the rails (NaN loss, undefined loss).
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace softprompt
