#include "tacc/error.hpp"

namespace tacc {

std::string Span::str() const {
  return std::to_string(line) + ":" + std::to_string(column);
}

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::UnknownCharacter: return "UnknownCharacter";
    case ErrorKind::UnterminatedLiteral: return "UnterminatedLiteral";
    case ErrorKind::SyntaxError: return "SyntaxError";
    case ErrorKind::UndeclaredIdentifier: return "UndeclaredIdentifier";
    case ErrorKind::RankMismatch: return "RankMismatch";
    case ErrorKind::InvalidIndexUsage: return "InvalidIndexUsage";
    case ErrorKind::InvalidRange: return "InvalidRange";
    case ErrorKind::Overflow: return "Overflow";
    case ErrorKind::TooManyOperands: return "TooManyOperands";
    case ErrorKind::RankTooHigh: return "RankTooHigh";
    case ErrorKind::CacheTooSmall: return "CacheTooSmall";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::UninitializedTensor: return "UninitializedTensor";
    case ErrorKind::NonEmptyRequired: return "NonEmptyRequired";
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::Internal: return "Internal";
  }
  return "Unknown";
}

namespace {

std::string format_message(ErrorKind kind, const std::string& message, const std::optional<Span>& span) {
  std::string out(to_string(kind));
  if (span) out += " at " + span->str();
  out += ": " + message;
  return out;
}

}  // namespace

Error::Error(ErrorKind kind, const std::string& message, std::optional<Span> span)
    : std::runtime_error(format_message(kind, message, span)),
      kind_(kind),
      span_(span),
      message_(message) {}

}  // namespace tacc
