#include "tacc/frontend.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace tacc::frontend {

std::string_view to_string(TokenKind kind) {
  switch (kind) {
    case TokenKind::KwIndexLabel: return "'IndexLabel'";
    case TokenKind::KwTensor: return "'Tensor'";
    case TokenKind::Identifier: return "identifier";
    case TokenKind::IntLiteral: return "integer literal";
    case TokenKind::FloatLiteral: return "float literal";
    case TokenKind::LBracket: return "'['";
    case TokenKind::RBracket: return "']'";
    case TokenKind::LParen: return "'('";
    case TokenKind::RParen: return "')'";
    case TokenKind::LAngle: return "'<'";
    case TokenKind::RAngle: return "'>'";
    case TokenKind::Comma: return "','";
    case TokenKind::Colon: return "':'";
    case TokenKind::Semicolon: return "';'";
    case TokenKind::Assign: return "'='";
    case TokenKind::PlusAssign: return "'+='";
    case TokenKind::MinusAssign: return "'-='";
    case TokenKind::Star: return "'*'";
    case TokenKind::End: return "end of input";
  }
  return "?";
}

std::string_view to_string(ElementType type) {
  switch (type) {
    case ElementType::Int: return "int";
    case ElementType::Float: return "float";
    case ElementType::Double: return "double";
  }
  return "?";
}

std::string_view to_string(AssignOp op) {
  switch (op) {
    case AssignOp::Assign: return "=";
    case AssignOp::AddAssign: return "+=";
    case AssignOp::SubAssign: return "-=";
  }
  return "?";
}

const Span& span_of(const Stmt& stmt) {
  return std::visit([](const auto& s) -> const Span& { return s.span; }, stmt);
}

// ---------------------------------------------------------------------------
// Lexer

namespace {

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

class Lexer {
public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (true) {
      skip_trivia();
      if (pos_ >= src_.size()) {
        out.push_back(Token{TokenKind::End, "", Span{src_.size(), 0, line_, col_}});
        return out;
      }
      out.push_back(next());
    }
  }

private:
  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;

  char peek(std::size_t ahead = 0) const {
    return pos_ + ahead < src_.size() ? src_[pos_ + ahead] : '\0';
  }

  void bump() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skip_trivia() {
    while (pos_ < src_.size()) {
      char c = peek();
      if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        bump();
      } else if (c == '/' && peek(1) == '/') {
        while (pos_ < src_.size() && peek() != '\n') bump();
      } else {
        return;
      }
    }
  }

  Token make(TokenKind kind, std::size_t start, int line, int col) const {
    return Token{kind, std::string(src_.substr(start, pos_ - start)), Span{start, pos_ - start, line, col}};
  }

  Token next() {
    const std::size_t start = pos_;
    const int line = line_;
    const int col = col_;
    const char c = peek();

    if (is_ident_start(c)) {
      while (pos_ < src_.size() && is_ident_char(peek())) bump();
      Token tok = make(TokenKind::Identifier, start, line, col);
      if (tok.text == "IndexLabel") tok.kind = TokenKind::KwIndexLabel;
      else if (tok.text == "Tensor") tok.kind = TokenKind::KwTensor;
      return tok;
    }
    if (is_digit(c) || (c == '.' && is_digit(peek(1))) ||
        (c == '-' && (is_digit(peek(1)) || (peek(1) == '.' && is_digit(peek(2)))))) {
      return number(start, line, col);
    }

    auto single = [&](TokenKind kind) {
      bump();
      return make(kind, start, line, col);
    };
    switch (c) {
      case '[': return single(TokenKind::LBracket);
      case ']': return single(TokenKind::RBracket);
      case '(': return single(TokenKind::LParen);
      case ')': return single(TokenKind::RParen);
      case '<': return single(TokenKind::LAngle);
      case '>': return single(TokenKind::RAngle);
      case ',': return single(TokenKind::Comma);
      case ':': return single(TokenKind::Colon);
      case ';': return single(TokenKind::Semicolon);
      case '*': return single(TokenKind::Star);
      case '=': return single(TokenKind::Assign);
      case '+':
      case '-':
        if (peek(1) == '=') {
          bump();
          bump();
          return make(c == '+' ? TokenKind::PlusAssign : TokenKind::MinusAssign, start, line, col);
        }
        break;
      default:
        break;
    }

    // Report the whole UTF-8 sequence for non-ASCII input.
    std::size_t len = 1;
    const auto lead = static_cast<unsigned char>(c);
    if (lead >= 0xF0) len = 4;
    else if (lead >= 0xE0) len = 3;
    else if (lead >= 0xC0) len = 2;
    len = std::min(len, src_.size() - start);
    throw Error(ErrorKind::UnknownCharacter,
                "unexpected character '" + std::string(src_.substr(start, len)) + "'",
                Span{start, len, line, col});
  }

  Token number(std::size_t start, int line, int col) {
    bool is_float = false;
    if (peek() == '-') bump();
    while (is_digit(peek())) bump();
    if (peek() == '.') {
      is_float = true;
      bump();
      while (is_digit(peek())) bump();
    }
    if (peek() == 'e' || peek() == 'E') {
      is_float = true;
      bump();
      if (peek() == '+' || peek() == '-') bump();
      if (!is_digit(peek())) {
        throw Error(ErrorKind::UnterminatedLiteral, "exponent has no digits",
                    Span{start, pos_ - start, line, col});
      }
      while (is_digit(peek())) bump();
    }
    if (is_ident_start(peek())) {
      throw Error(ErrorKind::UnterminatedLiteral, "malformed numeric literal",
                  Span{start, pos_ - start + 1, line, col});
    }
    return make(is_float ? TokenKind::FloatLiteral : TokenKind::IntLiteral, start, line, col);
  }
};

}  // namespace

std::vector<Token> tokenize(std::string_view source) {
  return Lexer(source).run();
}

// ---------------------------------------------------------------------------
// Parser

namespace {

class Parser {
public:
  explicit Parser(const std::vector<Token>& tokens) : toks_(tokens) {
    if (toks_.empty() || toks_.back().kind != TokenKind::End) {
      throw Error(ErrorKind::Internal, "token stream must end with End");
    }
  }

  SourceProgram program() {
    SourceProgram prog;
    while (cur().kind != TokenKind::End) prog.statements.push_back(statement());
    return prog;
  }

private:
  const std::vector<Token>& toks_;
  std::size_t pos_ = 0;

  const Token& cur() const { return toks_[pos_]; }
  const Token& advance() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }
  bool at(TokenKind kind) const { return cur().kind == kind; }

  [[noreturn]] void fail(std::string_view expected) const {
    std::string found = cur().kind == TokenKind::End
                            ? std::string(to_string(TokenKind::End))
                            : "'" + cur().text + "'";
    throw Error(ErrorKind::SyntaxError, "expected " + std::string(expected) + ", found " + found, cur().span);
  }

  const Token& expect(TokenKind kind) {
    if (!at(kind)) fail(to_string(kind));
    return advance();
  }

  static Span cover(const Span& first, const Span& last) {
    return Span{first.offset, last.offset + last.length - first.offset, first.line, first.column};
  }
  const Span& prev_span() const { return toks_[pos_ - 1].span; }

  Stmt statement() {
    switch (cur().kind) {
      case TokenKind::KwIndexLabel: return index_label();
      case TokenKind::KwTensor: return tensor_decl();
      case TokenKind::Identifier: return tensor_op();
      default: fail("statement");
    }
  }

  std::vector<std::string> id_list() {
    std::vector<std::string> names;
    if (at(TokenKind::Identifier)) {
      names.push_back(advance().text);
      return names;
    }
    expect(TokenKind::LBracket);
    names.push_back(expect(TokenKind::Identifier).text);
    while (at(TokenKind::Comma)) {
      advance();
      names.push_back(expect(TokenKind::Identifier).text);
    }
    expect(TokenKind::RBracket);
    return names;
  }

  std::int64_t integer() {
    const Token& tok = expect(TokenKind::IntLiteral);
    std::int64_t value = 0;
    auto [ptr, ec] = std::from_chars(tok.text.data(), tok.text.data() + tok.text.size(), value);
    if (ec != std::errc() || ptr != tok.text.data() + tok.text.size()) {
      throw Error(ErrorKind::Overflow, "integer literal out of range", tok.span);
    }
    return value;
  }

  IndexLabelDecl index_label() {
    const Span start = advance().span;
    IndexLabelDecl decl;
    decl.names = id_list();
    expect(TokenKind::Assign);
    const Span range_start = expect(TokenKind::LBracket).span;
    const std::int64_t first = integer();
    if (at(TokenKind::Colon)) {
      advance();
      decl.range.begin = first;
      decl.range.end = integer();
      if (at(TokenKind::Colon)) {
        advance();
        decl.range.increment = integer();
      }
    } else {
      decl.range = IndexRange{0, first, 1};
    }
    expect(TokenKind::RBracket);
    const Span range_span = cover(range_start, prev_span());
    if (decl.range.increment < 1) {
      throw Error(ErrorKind::InvalidRange, "range increment must be >= 1", range_span);
    }
    if (decl.range.end <= decl.range.begin) {
      throw Error(ErrorKind::InvalidRange, "range end must be greater than begin", range_span);
    }
    expect(TokenKind::Semicolon);
    decl.span = cover(start, prev_span());
    return decl;
  }

  TensorDeclStmt tensor_decl() {
    const Span start = advance().span;
    TensorDeclStmt decl;
    expect(TokenKind::LAngle);
    if (!at(TokenKind::Identifier)) fail("element type");
    const Token& type = advance();
    if (type.text == "double") decl.element_type = ElementType::Double;
    else if (type.text == "float") decl.element_type = ElementType::Float;
    else if (type.text == "int") decl.element_type = ElementType::Int;
    else {
      throw Error(ErrorKind::SyntaxError, "expected element type (int, float, double), found '" + type.text + "'",
                  type.span);
    }
    expect(TokenKind::RAngle);
    decl.name = expect(TokenKind::Identifier).text;
    expect(TokenKind::LParen);
    if (at(TokenKind::LBracket) && toks_[pos_ + 1].kind == TokenKind::RBracket) {
      advance();
      advance();
    } else {
      decl.dim_labels = id_list();
    }
    expect(TokenKind::RParen);
    expect(TokenKind::Semicolon);
    decl.span = cover(start, prev_span());
    return decl;
  }

  LabeledTensorRef labeled_tensor() {
    const Token& name = expect(TokenKind::Identifier);
    LabeledTensorRef ref;
    ref.tensor_name = name.text;
    TokenKind close;
    if (at(TokenKind::LBracket)) close = TokenKind::RBracket;
    else if (at(TokenKind::LParen)) close = TokenKind::RParen;
    else fail("'[' or '('");
    advance();
    // Declaration-style `A([i,j])`.
    const bool nested = close == TokenKind::RParen && at(TokenKind::LBracket);
    if (nested) {
      advance();
      close = TokenKind::RBracket;
    }
    if (!at(close)) {
      ref.labels.push_back(expect(TokenKind::Identifier).text);
      while (at(TokenKind::Comma)) {
        advance();
        ref.labels.push_back(expect(TokenKind::Identifier).text);
      }
    }
    expect(close);
    if (nested) expect(TokenKind::RParen);
    ref.span = cover(name.span, prev_span());
    return ref;
  }

  double number() {
    const Token& tok = advance();
    try {
      return std::stod(tok.text);
    } catch (const std::out_of_range&) {
      throw Error(ErrorKind::Overflow, "numeric literal out of range", tok.span);
    }
  }

  RhsExpr rhs() {
    RhsExpr expr;
    if (at(TokenKind::IntLiteral) || at(TokenKind::FloatLiteral)) {
      const double value = number();
      if (!at(TokenKind::Star)) {
        expr.kind = RhsExpr::Kind::Scalar;
        expr.scalar = value;
        return expr;
      }
      advance();
      expr.explicit_alpha = true;
      expr.alpha = value;
    } else if (!at(TokenKind::Identifier)) {
      fail("scalar or labeled tensor");
    }
    expr.kind = RhsExpr::Kind::Product;
    expr.operands.push_back(labeled_tensor());
    while (at(TokenKind::Star)) {
      advance();
      expr.operands.push_back(labeled_tensor());
    }
    return expr;
  }

  TensorOpStmt tensor_op() {
    TensorOpStmt stmt;
    stmt.lhs = labeled_tensor();
    switch (cur().kind) {
      case TokenKind::Assign: stmt.assign_op = AssignOp::Assign; break;
      case TokenKind::PlusAssign: stmt.assign_op = AssignOp::AddAssign; break;
      case TokenKind::MinusAssign: stmt.assign_op = AssignOp::SubAssign; break;
      default: fail("'=', '+=' or '-='");
    }
    advance();
    stmt.rhs = rhs();
    expect(TokenKind::Semicolon);
    stmt.span = cover(stmt.lhs.span, prev_span());
    return stmt;
  }
};

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s(buf);
  // Round-trip through the shortest representation that parses back exactly.
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::stod(buf) == v) {
      s = buf;
      break;
    }
  }
  return s;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ",";
    out += items[i];
  }
  return out;
}

std::string ref_str(const LabeledTensorRef& ref) {
  return ref.tensor_name + "[" + join(ref.labels) + "]";
}

}  // namespace

SourceProgram parse(const std::vector<Token>& tokens) {
  return Parser(tokens).program();
}

SourceProgram parse_source(std::string_view source) {
  return parse(tokenize(source));
}

std::string pretty_print(const SourceProgram& program) {
  std::ostringstream os;
  for (const Stmt& stmt : program.statements) {
    if (const auto* il = std::get_if<IndexLabelDecl>(&stmt)) {
      os << "IndexLabel ";
      if (il->names.size() == 1) os << il->names[0];
      else os << "[" << join(il->names) << "]";
      os << " = [" << il->range.begin << ":" << il->range.end << ":" << il->range.increment << "];\n";
    } else if (const auto* td = std::get_if<TensorDeclStmt>(&stmt)) {
      os << "Tensor<" << to_string(td->element_type) << "> " << td->name << "([" << join(td->dim_labels)
         << "]);\n";
    } else {
      const auto& op = std::get<TensorOpStmt>(stmt);
      os << ref_str(op.lhs) << " " << to_string(op.assign_op) << " ";
      if (op.rhs.kind == RhsExpr::Kind::Scalar) {
        os << format_number(op.rhs.scalar);
      } else {
        if (op.rhs.explicit_alpha) os << format_number(op.rhs.alpha) << " * ";
        for (std::size_t i = 0; i < op.rhs.operands.size(); ++i) {
          if (i) os << " * ";
          os << ref_str(op.rhs.operands[i]);
        }
      }
      os << ";\n";
    }
  }
  return os.str();
}

std::string dump_ast(const SourceProgram& program) {
  std::ostringstream os;
  os << "Program (" << program.statements.size() << " statements)\n";
  for (const Stmt& stmt : program.statements) {
    const Span& sp = span_of(stmt);
    if (const auto* il = std::get_if<IndexLabelDecl>(&stmt)) {
      os << "  IndexLabelDecl @" << sp.str() << "\n"
         << "    names: [" << join(il->names) << "]\n"
         << "    range: " << il->range.begin << ":" << il->range.end << ":" << il->range.increment << "\n";
    } else if (const auto* td = std::get_if<TensorDeclStmt>(&stmt)) {
      os << "  TensorDecl @" << sp.str() << "\n"
         << "    name: " << td->name << "\n"
         << "    element_type: " << to_string(td->element_type) << "\n"
         << "    dims: [" << join(td->dim_labels) << "]\n";
    } else {
      const auto& op = std::get<TensorOpStmt>(stmt);
      os << "  TensorOp '" << to_string(op.assign_op) << "' @" << sp.str() << "\n"
         << "    lhs: " << ref_str(op.lhs) << "\n";
      if (op.rhs.kind == RhsExpr::Kind::Scalar) {
        os << "    rhs: Scalar " << format_number(op.rhs.scalar) << "\n";
      } else {
        os << "    rhs: Product alpha=" << format_number(op.rhs.alpha)
           << (op.rhs.explicit_alpha ? "" : " (implicit)") << "\n";
        for (const auto& ref : op.rhs.operands) os << "      " << ref_str(ref) << "\n";
      }
    }
  }
  return os.str();
}

namespace {

bool same(const LabeledTensorRef& a, const LabeledTensorRef& b) {
  return a.tensor_name == b.tensor_name && a.labels == b.labels;
}

bool same(const Stmt& a, const Stmt& b) {
  if (a.index() != b.index()) return false;
  if (const auto* x = std::get_if<IndexLabelDecl>(&a)) {
    const auto& y = std::get<IndexLabelDecl>(b);
    return x->names == y.names && x->range == y.range;
  }
  if (const auto* x = std::get_if<TensorDeclStmt>(&a)) {
    const auto& y = std::get<TensorDeclStmt>(b);
    return x->name == y.name && x->element_type == y.element_type && x->dim_labels == y.dim_labels;
  }
  const auto& x = std::get<TensorOpStmt>(a);
  const auto& y = std::get<TensorOpStmt>(b);
  if (!same(x.lhs, y.lhs) || x.assign_op != y.assign_op || x.rhs.kind != y.rhs.kind) return false;
  if (x.rhs.kind == RhsExpr::Kind::Scalar) return x.rhs.scalar == y.rhs.scalar;
  if (x.rhs.explicit_alpha != y.rhs.explicit_alpha || x.rhs.alpha != y.rhs.alpha) return false;
  if (x.rhs.operands.size() != y.rhs.operands.size()) return false;
  for (std::size_t i = 0; i < x.rhs.operands.size(); ++i) {
    if (!same(x.rhs.operands[i], y.rhs.operands[i])) return false;
  }
  return true;
}

}  // namespace

bool structurally_equal(const SourceProgram& lhs, const SourceProgram& rhs) {
  if (lhs.statements.size() != rhs.statements.size()) return false;
  for (std::size_t i = 0; i < lhs.statements.size(); ++i) {
    if (!same(lhs.statements[i], rhs.statements[i])) return false;
  }
  return true;
}

}  // namespace tacc::frontend
