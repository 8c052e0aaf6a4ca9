#pragma once

#include <stdexcept>
#include <string>

namespace verse3d {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Invalid or unsupported configuration value. `what()` carries the field path.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input that is well-formed but degenerate for the requested fit.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Caller broke a documented precondition that is only checked in debug builds.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// Malformed file, response body, or model.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Referenced entity does not exist (scene id, artifact, model file).
class NotFoundError : public Error {
 public:
  using Error::Error;
};

/// Optimization produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Network failure, timeout, or non-success status from a backend.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, int status = 0, bool retryable = true)
      : Error(what), status_(status), retryable_(retryable) {}
  int status() const noexcept { return status_; }
  bool retryable() const noexcept { return retryable_; }

 private:
  int status_;
  bool retryable_;
};

/// Backend declined the request (content policy).
class RefusalError : public Error {
 public:
  using Error::Error;
};

/// Backend answered with a payload that violates the wire contract.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

}  // namespace verse3d
