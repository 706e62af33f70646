#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace testforge {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// ---- config -------------------------------------------------------------

/// Structural problem in the configuration document: unknown or missing key,
/// wrong node type, malformed YAML.
class SchemaError : public Error {
public:
  SchemaError(std::string key_path, int line, const std::string& what)
      : Error(key_path + " (line " + std::to_string(line) + "): " + what),
        key_path_(std::move(key_path)), line_(line) {}
  const std::string& key_path() const noexcept { return key_path_; }
  int line() const noexcept { return line_; }

private:
  std::string key_path_;
  int line_;
};

/// Well-formed configuration that breaks an invariant (e.g. max_iterations 0).
class ValidationError : public Error {
public:
  ValidationError(std::string key_path, int line, const std::string& what)
      : Error(key_path + " (line " + std::to_string(line) + "): " + what),
        key_path_(std::move(key_path)), line_(line) {}
  const std::string& key_path() const noexcept { return key_path_; }
  int line() const noexcept { return line_; }

private:
  std::string key_path_;
  int line_;
};

// ---- java analysis ------------------------------------------------------

class ParseError : public Error {
public:
  ParseError(std::size_t offset, const std::string& what)
      : Error("offset " + std::to_string(offset) + ": " + what), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

private:
  std::size_t offset_;
};

class ClassNotFound : public Error {
public:
  using Error::Error;
};

class MethodNotFound : public Error {
public:
  MethodNotFound(const std::string& method, std::vector<std::string> available)
      : Error(make_message(method, available)), available_(std::move(available)) {}
  const std::vector<std::string>& available() const noexcept { return available_; }

private:
  static std::string make_message(const std::string& method,
                                  const std::vector<std::string>& available) {
    std::string msg = "method '" + method + "' not found; available:";
    for (const auto& name : available) msg += " " + name;
    return msg;
  }
  std::vector<std::string> available_;
};

// ---- prompting ----------------------------------------------------------

class ContextTooLarge : public Error {
public:
  using Error::Error;
};

class TemplateError : public Error {
public:
  using Error::Error;
};

// ---- llm gateway --------------------------------------------------------

class BackendUnavailable : public Error {
public:
  using Error::Error;
};

class AuthError : public Error {
public:
  using Error::Error;
};

class ScriptExhausted : public Error {
public:
  using Error::Error;
};

class ScriptFormatError : public Error {
public:
  ScriptFormatError(std::size_t entry_index, const std::string& what)
      : Error("script entry " + std::to_string(entry_index) + ": " + what),
        entry_index_(entry_index) {}
  std::size_t entry_index() const noexcept { return entry_index_; }

private:
  std::size_t entry_index_;
};

// ---- postprocess --------------------------------------------------------

class ExtractionTimeout : public Error {
public:
  using Error::Error;
};

class NoCodeFound : public Error {
public:
  using Error::Error;
};

class EmptyGeneration : public Error {
public:
  using Error::Error;
};

class LedgerIoError : public Error {
public:
  using Error::Error;
};

// ---- execution / assembly ----------------------------------------------

class RunnerError : public Error {
public:
  using Error::Error;
};

class NothingToMerge : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

class VcsError : public Error {
public:
  using Error::Error;
};

// ---- reporting ----------------------------------------------------------

class CoverageFormatError : public Error {
public:
  using Error::Error;
};

// ---- service ------------------------------------------------------------

class SessionBusy : public Error {
public:
  using Error::Error;
};

class SessionNotFound : public Error {
public:
  using Error::Error;
};

}  // namespace testforge
