#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace costforge {

/// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- structured output / tagged text -------------------------------------

class MalformedTags : public Error {
 public:
  using Error::Error;
};

/// Parse failure with a 1-based source position.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t line, std::size_t column)
      : Error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + message),
        line_(line),
        column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

class KindMismatch : public Error {
 public:
  using Error::Error;
};

class InvariantViolation : public Error {
 public:
  using Error::Error;
};

// --- gateway ---------------------------------------------------------------

class MissingBinding : public Error {
 public:
  explicit MissingBinding(std::string name)
      : Error("missing binding for placeholder '" + name + "'"), name_(std::move(name)) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

/// Retry budget exhausted, or no backend registered under the tag.
class BackendUnavailable : public Error {
 public:
  using Error::Error;
};

/// A recoverable backend failure (timeouts, 429, 5xx). Retried by the gateway.
class TransientBackendError : public Error {
 public:
  using Error::Error;
};

/// A non-recoverable backend failure (bad credentials, 4xx). Not retried.
class BackendError : public Error {
 public:
  using Error::Error;
};

class BudgetExceeded : public Error {
 public:
  using Error::Error;
};

class ScriptExhausted : public Error {
 public:
  using Error::Error;
};

// --- pipeline ----------------------------------------------------------------

class UnparseableSelection : public Error {
 public:
  using Error::Error;
};

class EmptySchema : public Error {
 public:
  using Error::Error;
};

/// Model output that could not be turned into a trace and SSO. Keeps the raw
/// text so refinement or audit can see what the model actually said.
class GenerationRejected : public Error {
 public:
  GenerationRejected(const std::string& cause, std::string raw_text)
      : Error("generation rejected: " + cause), cause_(cause), raw_text_(std::move(raw_text)) {}

  const std::string& cause() const noexcept { return cause_; }
  const std::string& raw_text() const noexcept { return raw_text_; }

 private:
  std::string cause_;
  std::string raw_text_;
};

// --- judging / rewards --------------------------------------------------------

class JudgeUnparseable : public Error {
 public:
  using Error::Error;
};

class ScoreOutOfRange : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class GroupTooSmall : public Error {
 public:
  using Error::Error;
};

// --- records ------------------------------------------------------------------

class IoError : public Error {
 public:
  using Error::Error;
};

class SchemaVersionMismatch : public Error {
 public:
  using Error::Error;
};

class EmptyInput : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace costforge
