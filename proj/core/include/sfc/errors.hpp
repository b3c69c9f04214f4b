#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sfc {

// Root of every error thrown by the library. Callers that only care about
// "something went wrong in sfc" catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inputs whose shapes disagree (e.g. probability vector vs. choice count).
class StructuralError : public Error {
 public:
  using Error::Error;
};

// A value outside its mathematical domain (negative mass, PMV > 1, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// A required input is missing (e.g. PMI scoring without priors).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Bad generator / run / enumeration configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

// Text that cannot be rendered without breaking the line-oriented template.
class EscapingError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what);

  const std::string& source() const { return source_; }
  std::size_t line() const { return line_; }

 private:
  std::string source_;
  std::size_t line_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Backend failures. Only TransportError is retried by the gateway.
class BackendError : public Error {
 public:
  using Error::Error;
};

class TransportError : public BackendError {
 public:
  using BackendError::BackendError;
};

class CapabilityError : public BackendError {
 public:
  using BackendError::BackendError;
};

class RequestError : public BackendError {
 public:
  using BackendError::BackendError;
};

}  // namespace sfc
