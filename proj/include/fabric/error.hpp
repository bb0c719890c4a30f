#pragma once

#include <stdexcept>
#include <string>

namespace fabric {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (step size out of range, bad shape, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure failed (singular system, iteration budget exhausted, ...).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed or schema-violating input data. `pointer` is a JSON pointer to the offending field.
class InputError : public Error {
 public:
  InputError(const std::string& pointer, const std::string& what)
      : Error(pointer.empty() ? what : pointer + ": " + what), pointer_(pointer) {}

  const std::string& pointer() const noexcept { return pointer_; }

 private:
  std::string pointer_;
};

}  // namespace fabric
