#pragma once

#include <stdexcept>

namespace flowplan {

/// Malformed argument or out-of-domain value supplied by a caller.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A documented precondition of an operation was not met.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A workflow, pool or report file could not be read.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The exact oracle refused an instance that exceeds its size guard.
class SizeLimitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedModeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unknown method name, bad flag combination and similar CLI-level mistakes.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace flowplan
