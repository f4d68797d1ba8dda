#pragma once

#include <stdexcept>
#include <string>

namespace otobias {

// Base for every error the library raises on purpose. The CLI maps the
// subclasses onto exit codes (validation -> 1, I/O -> 3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input data or arguments: malformed rows, contract violations,
// preconditions that the caller could have checked.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Files that cannot be opened, read, decoded or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace otobias
