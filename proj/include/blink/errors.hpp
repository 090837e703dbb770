#pragma once

#include <stdexcept>
#include <string>

namespace blink {

// Base for every error raised by the library. The CLI maps InputError
// subclasses to exit code 2 and NumericalError subclasses to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A precondition on a physical quantity is violated (negative rate, p1 > 1, ...).
class DomainError : public InputError {
 public:
  using InputError::InputError;
};

/// The requested quantity is undefined for these inputs (e.g. A31 = Omega31 = 0).
class DegenerateError : public InputError {
 public:
  using InputError::InputError;
};

class ParseError : public InputError {
 public:
  using InputError::InputError;
};

class InsufficientDataError : public InputError {
 public:
  using InputError::InputError;
};

/// No time window separates the fast and slow rates.
class HierarchyError : public InputError {
 public:
  using InputError::InputError;
};

/// Stationary distribution is not unique.
class ReducibleChainError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ConvergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace blink
