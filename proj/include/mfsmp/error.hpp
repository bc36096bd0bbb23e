#pragma once

#include <stdexcept>
#include <string>

namespace mfsmp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller violated an operation's precondition (wrong level, bad shape, ...).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Malformed noise law or problem data.
class InvalidModelError : public Error {
 public:
  using Error::Error;
};

/// Configuration text does not follow the documented schema.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Well-formed configuration with inconsistent content.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A coefficient was evaluated outside its domain (e.g. utility at v <= 0).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Forward recursion produced a non-finite state.
class SimulationError : public Error {
 public:
  using Error::Error;
};

/// Exact enumeration refused because the instance is too large.
class TooLargeError : public Error {
 public:
  using Error::Error;
};

}  // namespace mfsmp
