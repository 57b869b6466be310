#pragma once

#include <stdexcept>
#include <string>

namespace gcs {

// Every domain failure derives from Error so the CLI can map it to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DegenerateInput : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

/** @brief Raised by calibration when the design matrix cannot identify all coefficients. */
class RankDeficient : public Error {
 public:
  using Error::Error;
};

}  // namespace gcs
