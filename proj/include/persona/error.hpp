#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace persona {

/// Base for every error raised by the engine. Callers that only need a
/// message can catch this; the subclasses carry structured context.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input document (taxonomy, profile JSON, corpus line, judge text).
/// `line` and `column` are 1-based; zero means "not applicable".
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0, std::size_t column = 0)
      : Error(format(what, line, column)), line_(line), column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  static std::string format(const std::string& what, std::size_t line, std::size_t column) {
    if (line == 0) return what;
    std::string out = "line " + std::to_string(line);
    if (column != 0) out += ", column " + std::to_string(column);
    return out + ": " + what;
  }

  std::size_t line_;
  std::size_t column_;
};

class DuplicateIdError : public Error {
 public:
  explicit DuplicateIdError(std::string id)
      : Error("duplicate id '" + id + "'"), id_(std::move(id)) {}
  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

class UnknownPathError : public Error {
 public:
  explicit UnknownPathError(std::string path)
      : Error("path '" + path + "' does not resolve in the taxonomy"), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Contract violation on arguments (length mismatch, out-of-range parameter).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Operation is not valid in the current state (duplicate snapshot, no
/// pending query, out-of-order provenance).
class StateError : public Error {
 public:
  using Error::Error;
};

}  // namespace persona
