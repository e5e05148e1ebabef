#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace chunksel {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad inputs, malformed files, invalid configs.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// An endpoint cannot be used at all (unreachable, missing capability).
class StartupError : public Error {
 public:
  using Error::Error;
};

class CapabilityError : public StartupError {
 public:
  using StartupError::StartupError;
};

// A chunk step produced nothing usable.
class StepError : public Error {
 public:
  using Error::Error;
};

struct AttemptRecord {
  int attempt = 0;
  int status = 0;            // HTTP status, 0 on transport failure
  std::string error;         // transport error or response excerpt
  long long delay_ms = 0;    // backoff slept after this attempt
};

class BackendError : public Error {
 public:
  BackendError(const std::string& what, std::vector<AttemptRecord> attempts = {})
      : Error(what), attempts_(std::move(attempts)) {}

  const std::vector<AttemptRecord>& attempts() const { return attempts_; }

 private:
  std::vector<AttemptRecord> attempts_;
};

class ResumeMismatchError : public ValidationError {
 public:
  ResumeMismatchError(const std::string& what, std::vector<std::string> diff)
      : ValidationError(what), diff_(std::move(diff)) {}

  const std::vector<std::string>& diff() const { return diff_; }

 private:
  std::vector<std::string> diff_;
};

}  // namespace chunksel
