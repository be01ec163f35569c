#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tacc {

/// Source location of a token or statement. Lines and columns are 1-based,
/// `offset`/`length` are byte positions into the original text.
struct Span {
  std::size_t offset = 0;
  std::size_t length = 0;
  int line = 1;
  int column = 1;

  std::string str() const;
};

enum class ErrorKind {
  UnknownCharacter,
  UnterminatedLiteral,
  SyntaxError,
  UndeclaredIdentifier,
  RankMismatch,
  InvalidIndexUsage,
  InvalidRange,
  Overflow,
  TooManyOperands,
  RankTooHigh,
  CacheTooSmall,
  InvalidConfig,
  ShapeMismatch,
  UninitializedTensor,
  NonEmptyRequired,
  SchemaError,
  IoError,
  Internal,
};

std::string_view to_string(ErrorKind kind);

/// Single exception type for the whole library; `kind()` carries the
/// category, `span()` is set for errors that point into DSL source.
class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& message, std::optional<Span> span = std::nullopt);

  ErrorKind kind() const noexcept { return kind_; }
  const std::optional<Span>& span() const noexcept { return span_; }
  const std::string& message() const noexcept { return message_; }

private:
  ErrorKind kind_;
  std::optional<Span> span_;
  std::string message_;
};

}  // namespace tacc
