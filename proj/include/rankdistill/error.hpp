#pragma once

#include <memory>
#include <stdexcept>
#include <string>

namespace rankdistill {

// Process exit codes used by the command-line tool.
enum class ExitCode : int {
  kOk = 0,
  kConfig = 2,
  kIo = 3,
  kNumeric = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  [[nodiscard]] ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// Invalid configuration, hyper-parameter, or violated precondition.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ExitCode::kConfig, what) {}
};

/// Missing prerequisite artifact (e.g. top-K cache before distillation).
class MissingArtifactError : public ConfigError {
 public:
  explicit MissingArtifactError(const std::string& what) : ConfigError(what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ExitCode::kIo, what) {}
};

/// Malformed input line; carries the 1-based line number.
class ParseError : public IoError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : IoError("line " + std::to_string(line) + ": " + what), line_(line) {}
  [[nodiscard]] std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class EmptyDatasetError : public IoError {
 public:
  explicit EmptyDatasetError(const std::string& what) : IoError(what) {}
};

class IndexError : public ConfigError {
 public:
  explicit IndexError(const std::string& what) : ConfigError(what) {}
};

class LookupError : public ConfigError {
 public:
  explicit LookupError(const std::string& what) : ConfigError(what) {}
};

/// Operation invoked on an object in the wrong state (e.g. unfitted baseline).
class StateError : public ConfigError {
 public:
  explicit StateError(const std::string& what) : ConfigError(what) {}
};

class DegenerateInputError : public ConfigError {
 public:
  explicit DegenerateInputError(const std::string& what) : ConfigError(what) {}
};

class EvalError : public ConfigError {
 public:
  explicit EvalError(const std::string& what) : ConfigError(what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ExitCode::kNumeric, what) {}
};

}  // namespace rankdistill
