#pragma once

#include <stdexcept>
#include <string>

namespace svyconform {

/// Base class for every error raised by the library. Callers that only care
/// about "the request was invalid" can catch this one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precondition or invariant violation in caller-supplied data.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, parsed or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Engine asked to run on data whose design it cannot handle.
class DesignMismatch : public Error {
 public:
  using Error::Error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidInput(message);
}

}  // namespace svyconform
