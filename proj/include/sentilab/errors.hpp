#pragma once

#include <stdexcept>
#include <string>

namespace sentilab {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Caller violated an operation's precondition.
struct PreconditionError : Error {
  using Error::Error;
};

struct NotFoundError : Error {
  using Error::Error;
};

// A second, different decision for an already decided candidate.
struct ConflictError : Error {
  using Error::Error;
};

// Accepting a candidate whose auto verdict is not `pass`.
struct NotAcceptableError : Error {
  using Error::Error;
};

struct ParseError : Error {
  using Error::Error;
};

struct ProviderError : Error {
  using Error::Error;
};

struct TrainingError : Error {
  using Error::Error;
};

}  // namespace sentilab
