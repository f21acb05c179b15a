#pragma once

#include <stdexcept>
#include <string>

namespace treepop {

/// Base for every recoverable data or model failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or structurally invalid input (tree spec, scenario file, tree edits).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A model or sampler could not be built or run on otherwise valid input.
class ModelError : public Error {
 public:
  using Error::Error;
};

/// Syntax or schema error in a spec document, carrying a 1-based location.
class ParseError : public DataError {
 public:
  ParseError(const std::string& message, int line, int column)
      : DataError(format(message, line, column)), line_{line}, column_{column} {}

  int line() const { return line_; }
  int column() const { return column_; }

 private:
  static std::string format(const std::string& message, int line, int column) {
    if (line <= 0) return message;
    return "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + message;
  }

  int line_;
  int column_;
};

}  // namespace treepop
