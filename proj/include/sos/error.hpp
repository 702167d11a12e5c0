#pragma once

#include <stdexcept>
#include <string>

namespace sos {

// Base class for every error thrown by this library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// A caller violated a documented precondition (empty input, bad arity, ...).
class PreconditionError : public Error {
  public:
    using Error::Error;
};

// Malformed input text; the message names the offending line when one exists.
class ParseError : public Error {
  public:
    using Error::Error;
};

// An operation ran against an object in the wrong state, e.g. reading the
// score of an objective that was never evaluated.
class StateError : public Error {
  public:
    using Error::Error;
};

// Invalid run configuration: weights, strategy names, missing files.
class ConfigError : public Error {
  public:
    using Error::Error;
};

// Unknown template id or a placeholder left without a binding.
class TemplateError : public Error {
  public:
    using Error::Error;
};

// Dataset-level shape violation (empty file, deficient category, bad split).
class DataError : public Error {
  public:
    using Error::Error;
};

// Transport or protocol failure talking to a model backend. `retryable`
// distinguishes transient faults (timeouts, 5xx) from permanent ones (4xx,
// malformed payloads); the retry helper only re-attempts the former.
class BackendError : public Error {
  public:
    BackendError(const std::string& what, bool retryable)
        : Error(what), retryable_(retryable) {}

    bool retryable() const { return retryable_; }

  private:
    bool retryable_;
};

}  // namespace sos
