#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace atelier {

enum class ErrorCode : std::uint8_t {
  syntax,
  unknown_enum,
  malformed_rational,
  version_mismatch,
  invalid_argument,
  out_of_vocabulary,
  invalid_score,
  invalid_config,
  numeric,
  too_large,
  invalid_transition,
  storage,
  not_found,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// A text-format error with a 1-based source position.
class ParseError : public Error {
 public:
  ParseError(ErrorCode code, int line, int column, const std::string& message)
      : Error(code, "line " + std::to_string(line) + ", column " + std::to_string(column) +
                        ": " + message),
        line_(line),
        column_(column) {}

  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  int line_;
  int column_;
};

}  // namespace atelier
