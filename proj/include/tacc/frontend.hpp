#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "tacc/error.hpp"

namespace tacc::frontend {

enum class TokenKind {
  KwIndexLabel,
  KwTensor,
  Identifier,
  IntLiteral,
  FloatLiteral,
  LBracket,
  RBracket,
  LParen,
  RParen,
  LAngle,
  RAngle,
  Comma,
  Colon,
  Semicolon,
  Assign,
  PlusAssign,
  MinusAssign,
  Star,
  End,
};

std::string_view to_string(TokenKind kind);

struct Token {
  TokenKind kind;
  std::string text;
  Span span;
};

/// Splits DSL source into tokens. `//` comments and whitespace are dropped;
/// the returned stream always ends with a single `End` token.
std::vector<Token> tokenize(std::string_view source);

struct IndexRange {
  std::int64_t begin = 0;
  std::int64_t end = 0;
  std::int64_t increment = 1;

  bool operator==(const IndexRange&) const = default;
};

struct IndexLabelDecl {
  std::vector<std::string> names;
  IndexRange range;
  Span span;
};

enum class ElementType { Int, Float, Double };

std::string_view to_string(ElementType type);

struct TensorDeclStmt {
  std::string name;
  ElementType element_type = ElementType::Double;
  std::vector<std::string> dim_labels;
  Span span;
};

struct LabeledTensorRef {
  std::string tensor_name;
  std::vector<std::string> labels;
  Span span;
};

enum class AssignOp { Assign, AddAssign, SubAssign };

std::string_view to_string(AssignOp op);

/// Right-hand side of a tensor statement. Either a bare scalar (fill) or a
/// product `alpha * T1 * ... * Tn`; `explicit_alpha` records whether the
/// literal was written so pretty-printing reproduces the source form.
struct RhsExpr {
  enum class Kind { Scalar, Product };
  Kind kind = Kind::Scalar;
  double scalar = 0.0;
  bool explicit_alpha = false;
  double alpha = 1.0;
  std::vector<LabeledTensorRef> operands;
};

struct TensorOpStmt {
  LabeledTensorRef lhs;
  AssignOp assign_op = AssignOp::Assign;
  RhsExpr rhs;
  Span span;
};

using Stmt = std::variant<IndexLabelDecl, TensorDeclStmt, TensorOpStmt>;

struct SourceProgram {
  std::vector<Stmt> statements;
};

SourceProgram parse(const std::vector<Token>& tokens);
SourceProgram parse_source(std::string_view source);

/// Canonical DSL text; parsing it yields a structurally identical program.
std::string pretty_print(const SourceProgram& program);

/// Indented tree dump used by `--emit ast`.
std::string dump_ast(const SourceProgram& program);

/// Compares two programs ignoring source spans.
bool structurally_equal(const SourceProgram& lhs, const SourceProgram& rhs);

const Span& span_of(const Stmt& stmt);

}  // namespace tacc::frontend
