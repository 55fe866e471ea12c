#pragma once

#include <stdexcept>
#include <string>

namespace promptdoctor {

/// Root of every error this library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CanonicalizationError : public Error {
 public:
  using Error::Error;
};

class MissingValueError : public Error {
 public:
  explicit MissingValueError(std::string hole)
      : Error("no value supplied for hole '" + hole + "'"), hole_(std::move(hole)) {}
  const std::string& hole() const noexcept { return hole_; }

 private:
  std::string hole_;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Gateway errors.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// Retryable transport failure (5xx, 429, connection reset). Only the gateway
/// sees these; they surface as TransportError once retries run out.
class TransientError : public TransportError {
 public:
  using TransportError::TransportError;
};

class AuthError : public Error {
 public:
  using Error::Error;
};

class BudgetExceeded : public Error {
 public:
  using Error::Error;
};

class UnscriptedCall : public Error {
 public:
  using Error::Error;
};

class MalformedResponse : public Error {
 public:
  MalformedResponse(const std::string& what, std::string raw)
      : Error(what), raw_(std::move(raw)) {}
  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

// Pipeline errors.
class DegenerateDataset : public Error {
 public:
  using Error::Error;
};

class SeedShortfall : public Error {
 public:
  using Error::Error;
};

class EvaluationFailed : public Error {
 public:
  using Error::Error;
};

class ZeroVector : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class RenderError : public Error {
 public:
  using Error::Error;
};

}  // namespace promptdoctor
