#pragma once

#include <stdexcept>
#include <string>

namespace gcd_audit {

// Two failure classes map onto the CLI exit-code contract:
// ValidationError -> 1, IoError -> 2.
class ValidationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class GrammarError : public ValidationError {
  public:
    GrammarError(const std::string & msg, size_t line = 0, size_t column = 0)
        : ValidationError(line == 0 ? msg
                                    : msg + " at line " + std::to_string(line) + ", column " +
                                          std::to_string(column)),
          line_(line),
          column_(column) {}

    size_t line() const { return line_; }
    size_t column() const { return column_; }

  private:
    size_t line_;
    size_t column_;
};

class VocabError : public ValidationError {
  public:
    using ValidationError::ValidationError;
};

class FormatError : public ValidationError {
  public:
    using ValidationError::ValidationError;
};

class StatsError : public ValidationError {
  public:
    using ValidationError::ValidationError;
};

class BackendError : public IoError {
  public:
    using IoError::IoError;
};

}  // namespace gcd_audit
