#pragma once

#include <stdexcept>
#include <string>

namespace advbench {

// Base of every error the library throws. The CLI maps the subclasses to
// exit codes, so new failure modes should derive from the closest one.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape contracts between tensors, graph nodes, images and models.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A NaN or Inf showed up where only finite values are allowed.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated binary/text files.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Bad data: empty datasets, out-of-range labels, unreadable inputs.
class DataError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values or arguments.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace advbench
