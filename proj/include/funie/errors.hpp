#pragma once

#include <stdexcept>

namespace funie {

/// Raised when operator arguments violate a shape or value precondition.
class InvalidArgument : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when an object is used in a state that does not support the call.
class StateError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

/// File system or codec failure; the message names the path.
class IoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Input data that is readable but inconsistent (e.g. unmatched dataset files).
class ValidationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Training diverged (non-finite loss).
class NumericError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

}  // namespace funie
