#pragma once

#include <stdexcept>
#include <string>

namespace glgat {

// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes or model dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Malformed, inconsistent or insufficient input data.
class DataError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value or combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, divergence, failed numerical checks.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// A masked-softmax row whose weights are all zero.
class DegenerateRowError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace glgat
