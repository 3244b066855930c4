#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace citing {

/// Base for every error raised by the pipeline. The CLI maps UsageError to
/// exit code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

/// Malformed input data (dataset files, config, persisted artifacts).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Failure to parse model output. Carries the byte span of the offending text.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t offset, std::size_t length,
             std::string snippet)
      : Error(message + " at offset " + std::to_string(offset) + ": \"" + snippet + "\""),
        offset_(offset),
        length_(length),
        snippet_(std::move(snippet)) {}

  std::size_t offset() const noexcept { return offset_; }
  std::size_t length() const noexcept { return length_; }
  const std::string& snippet() const noexcept { return snippet_; }

 private:
  std::size_t offset_;
  std::size_t length_;
  std::string snippet_;
};

/// Upstream service failure. Retryable errors are transient (network, 429, 5xx).
class ProviderError : public Error {
 public:
  ProviderError(const std::string& message, bool retryable, int status = 0)
      : Error(message), retryable_(retryable), status_(status) {}

  bool retryable() const noexcept { return retryable_; }
  int status() const noexcept { return status_; }

 private:
  bool retryable_;
  int status_;
};

class PipelineError : public Error {
 public:
  using Error::Error;
};

class TrainerError : public PipelineError {
 public:
  using PipelineError::PipelineError;
};

}  // namespace citing
