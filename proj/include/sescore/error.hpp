#pragma once

#include <stdexcept>
#include <string>

namespace sescore {

// Root of the library's exception hierarchy. The CLI maps each branch to an
// exit code: UsageError -> 1, DataError -> 2, BackendError -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

// Malformed input files, shape mismatches, degenerate statistics.
class DataError : public Error {
 public:
  using Error::Error;
};

class BackendError : public Error {
 public:
  using Error::Error;
};

// Connection refused, timeouts, 5xx. Safe to retry.
class TransportError : public BackendError {
 public:
  using BackendError::BackendError;
};

// A response that does not match the wire schema. Never retried.
class SchemaError : public BackendError {
 public:
  using BackendError::BackendError;
};

class CapabilityError : public BackendError {
 public:
  using BackendError::BackendError;
};

}  // namespace sescore
