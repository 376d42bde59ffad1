#pragma once

#include <stdexcept>
#include <string>

namespace mali {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad parameters or malformed input data. Maps to CLI exit status 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A computation could not be carried out on otherwise valid input
/// (singular solve, disconnected graph, kernel underflow). Exit status 2.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace mali
