#pragma once

#include <stdexcept>
#include <string>

namespace lscg {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data is malformed or violates an invariant (CLI exit code 2).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A corpus row could not be ingested.
class IngestionError : public DataError {
 public:
  IngestionError(const std::string& path, std::size_t line, const std::string& what)
      : DataError(path + ":" + std::to_string(line) + ": " + what), line_(line) {}
  explicit IngestionError(const std::string& what) : DataError(what) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_ = 0;
};

/// Dataset generation could not satisfy its constraints.
class GenerationError : public DataError {
 public:
  using DataError::DataError;
};

/// A stored artifact (cache entry, checkpoint, remote payload) is inconsistent.
class IntegrityError : public DataError {
 public:
  using DataError::DataError;
};

/// A remote service (embedding or chat endpoint) failed after retries (exit code 3).
class TransportError : public Error {
 public:
  using Error::Error;
};

/// Training diverged or was configured inconsistently.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace lscg
