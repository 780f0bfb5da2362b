#pragma once

#include <stdexcept>
#include <string>

namespace drate {

// Base for every failure raised by the library. Callers that only need to
// distinguish "bad input" from "the computation broke" can catch the two
// intermediate classes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

class SingularDesign : public Error {
 public:
  using Error::Error;
};

// A cross-fitting fold (or its complement) lacks treated or control rows.
class FoldDegeneracy : public Error {
 public:
  using Error::Error;
};

// Malformed on-disk data; line is 1-based, 0 when unknown.
class DataError : public Error {
 public:
  DataError(const std::string& what, std::size_t line = 0)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace drate
