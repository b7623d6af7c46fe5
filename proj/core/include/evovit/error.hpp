#pragma once

#include <stdexcept>
#include <string>

namespace evovit {

// Base of every error thrown by the library. The CLI maps the concrete type
// onto its exit-code contract.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, diverged training.
class NumericError : public Error {
 public:
  using Error::Error;
};

// An operation was invoked before its prerequisite state existed.
class StateError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents (IDX, checkpoint, PNM).
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace evovit
