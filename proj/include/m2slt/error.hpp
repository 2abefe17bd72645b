#pragma once

#include <stdexcept>
#include <string>

namespace m2slt {

// Root of every error raised by the library. The category decides the CLI
// exit code: config errors map to 2, data errors to 3, numeric errors to 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

// Malformed header or record in one of the binary/text file formats.
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

class BoundsError : public DataError {
 public:
  using DataError::DataError;
};

class ValueError : public DataError {
 public:
  using DataError::DataError;
};

class AlignmentError : public DataError {
 public:
  AlignmentError(const std::string& axis, const std::string& what)
      : DataError(what), axis_(axis) {}
  const std::string& axis() const { return axis_; }

 private:
  std::string axis_;
};

class RetrievalError : public Error {
 public:
  using Error::Error;
};

// DBSCAN labelled every point as noise, so no prototype could be formed.
class EmptyPrototypeError : public DataError {
 public:
  using DataError::DataError;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace m2slt
