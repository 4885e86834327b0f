#pragma once

// Scalar expressions over state variables x1..xn and parameters r1..rm.
//
// Expressions are immutable DAGs of reference-counted nodes. The parser builds
// the tree exactly as written; the arithmetic helpers used by differentiation
// fold constants and apply 0/1 identities but do nothing else.

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bsb/errors.hpp"

namespace bsb::sym {

enum class Op : std::uint8_t { lit, state, param, neg, add, sub, mul, div, pow, sin, cos, exp, sqrt };

struct Node;

struct Variable {
  enum class Kind : std::uint8_t { state, param };
  Kind kind = Kind::state;
  int index = 0;  // zero-based

  static Variable x(int i) { return {Kind::state, i}; }
  static Variable r(int j) { return {Kind::param, j}; }
  bool operator==(const Variable&) const = default;
};

class Expr {
 public:
  Expr() = default;

  bool valid() const noexcept { return node_ != nullptr; }
  Op op() const noexcept;
  /// Literal value (op() == Op::lit).
  double literal() const noexcept;
  /// Zero-based variable index (Op::state / Op::param).
  int index() const noexcept;
  /// Integer exponent (Op::pow).
  int exponent() const noexcept;
  /// First operand; the argument of unary nodes and the base of pow.
  Expr lhs() const noexcept;
  Expr rhs() const noexcept;
  std::size_t hash() const noexcept;
  const Node* node() const noexcept { return node_.get(); }

  bool is_literal(double v) const noexcept { return valid() && op() == Op::lit && literal() == v; }
  bool is_literal() const noexcept { return valid() && op() == Op::lit; }

 private:
  explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
  friend Expr make_node(Op, double, int, int, Expr, Expr);
  std::shared_ptr<const Node> node_;
};

struct Node {
  Op op;
  double value;
  int index;
  int exponent;
  Expr a;
  Expr b;
  std::size_t hash;
};

inline Op Expr::op() const noexcept { return node_->op; }
inline double Expr::literal() const noexcept { return node_->value; }
inline int Expr::index() const noexcept { return node_->index; }
inline int Expr::exponent() const noexcept { return node_->exponent; }
inline Expr Expr::lhs() const noexcept { return node_->a; }
inline Expr Expr::rhs() const noexcept { return node_->b; }
inline std::size_t Expr::hash() const noexcept { return node_ ? node_->hash : 0; }

namespace detail {
inline std::size_t mix(std::size_t seed, std::size_t v) {
  return seed ^ (v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
}
inline bool is_unary(Op op) {
  return op == Op::neg || op == Op::sin || op == Op::cos || op == Op::exp || op == Op::sqrt ||
         op == Op::pow;
}
inline bool is_binary(Op op) {
  return op == Op::add || op == Op::sub || op == Op::mul || op == Op::div;
}
}  // namespace detail

inline Expr make_node(Op op, double value, int index, int exponent, Expr a, Expr b) {
  std::size_t h = static_cast<std::size_t>(op);
  h = detail::mix(h, std::hash<std::uint64_t>{}(std::bit_cast<std::uint64_t>(value)));
  h = detail::mix(h, static_cast<std::size_t>(index));
  h = detail::mix(h, static_cast<std::size_t>(exponent));
  h = detail::mix(h, a.hash());
  h = detail::mix(h, b.hash());
  auto node = std::make_shared<const Node>(Node{op, value, index, exponent, std::move(a), std::move(b), h});
  return Expr(std::move(node));
}

// ---------------------------------------------------------------------------
// Raw constructors (no simplification).

inline Expr lit(double v) { return make_node(Op::lit, v, 0, 0, {}, {}); }
inline Expr state(int i) { return make_node(Op::state, 0.0, i, 0, {}, {}); }
inline Expr param(int j) { return make_node(Op::param, 0.0, j, 0, {}, {}); }
inline Expr variable(Variable v) { return v.kind == Variable::Kind::state ? state(v.index) : param(v.index); }
inline Expr raw_unary(Op op, Expr a) { return make_node(op, 0.0, 0, 0, std::move(a), {}); }
inline Expr raw_binary(Op op, Expr a, Expr b) { return make_node(op, 0.0, 0, 0, std::move(a), std::move(b)); }
inline Expr raw_pow(Expr base, int k) { return make_node(Op::pow, 0.0, 0, k, std::move(base), {}); }

// ---------------------------------------------------------------------------
// Simplifying constructors: constant folding and 0/1 identities only.

inline Expr neg(const Expr& a) {
  if (a.is_literal()) return lit(-a.literal());
  if (a.op() == Op::neg) return a.lhs();
  return raw_unary(Op::neg, a);
}

inline Expr operator-(const Expr& a) { return neg(a); }

inline Expr operator+(const Expr& a, const Expr& b) {
  if (a.is_literal() && b.is_literal()) return lit(a.literal() + b.literal());
  if (a.is_literal(0.0)) return b;
  if (b.is_literal(0.0)) return a;
  return raw_binary(Op::add, a, b);
}

inline Expr operator-(const Expr& a, const Expr& b) {
  if (a.is_literal() && b.is_literal()) return lit(a.literal() - b.literal());
  if (b.is_literal(0.0)) return a;
  if (a.is_literal(0.0)) return neg(b);
  return raw_binary(Op::sub, a, b);
}

inline Expr operator*(const Expr& a, const Expr& b) {
  if (a.is_literal() && b.is_literal()) return lit(a.literal() * b.literal());
  if (a.is_literal(0.0) || b.is_literal(0.0)) return lit(0.0);
  if (a.is_literal(1.0)) return b;
  if (b.is_literal(1.0)) return a;
  if (a.is_literal(-1.0)) return neg(b);
  if (b.is_literal(-1.0)) return neg(a);
  return raw_binary(Op::mul, a, b);
}

inline Expr operator/(const Expr& a, const Expr& b) {
  if (a.is_literal() && b.is_literal() && b.literal() != 0.0) return lit(a.literal() / b.literal());
  if (a.is_literal(0.0)) return lit(0.0);
  if (b.is_literal(1.0)) return a;
  return raw_binary(Op::div, a, b);
}

namespace detail {
inline double ipow(double x, int k) {
  bool invert = k < 0;
  unsigned e = invert ? static_cast<unsigned>(-(static_cast<long>(k))) : static_cast<unsigned>(k);
  double result = 1.0;
  double base = x;
  while (e) {
    if (e & 1u) result *= base;
    base *= base;
    e >>= 1u;
  }
  return invert ? 1.0 / result : result;
}
}  // namespace detail

inline Expr pow(const Expr& a, int k) {
  if (k == 0) return lit(1.0);
  if (k == 1) return a;
  if (a.is_literal() && (k > 0 || a.literal() != 0.0)) return lit(detail::ipow(a.literal(), k));
  return raw_pow(a, k);
}

inline Expr sin(const Expr& a) { return a.is_literal() ? lit(std::sin(a.literal())) : raw_unary(Op::sin, a); }
inline Expr cos(const Expr& a) { return a.is_literal() ? lit(std::cos(a.literal())) : raw_unary(Op::cos, a); }
inline Expr exp(const Expr& a) {
  if (a.is_literal() && std::isfinite(std::exp(a.literal()))) return lit(std::exp(a.literal()));
  return raw_unary(Op::exp, a);
}
inline Expr sqrt(const Expr& a) {
  if (a.is_literal() && a.literal() >= 0.0) return lit(std::sqrt(a.literal()));
  return raw_unary(Op::sqrt, a);
}

// ---------------------------------------------------------------------------
// Structural equality.

inline bool structurally_equal(const Expr& a, const Expr& b) {
  if (a.node() == b.node()) return true;
  if (!a.valid() || !b.valid()) return false;
  if (a.hash() != b.hash() || a.op() != b.op()) return false;
  switch (a.op()) {
    case Op::lit:
      return std::bit_cast<std::uint64_t>(a.literal()) == std::bit_cast<std::uint64_t>(b.literal());
    case Op::state:
    case Op::param:
      return a.index() == b.index();
    case Op::pow:
      return a.exponent() == b.exponent() && structurally_equal(a.lhs(), b.lhs());
    default:
      break;
  }
  if (!structurally_equal(a.lhs(), b.lhs())) return false;
  return !detail::is_binary(a.op()) || structurally_equal(a.rhs(), b.rhs());
}

inline bool operator==(const Expr& a, const Expr& b) { return structurally_equal(a, b); }

/// Largest zero-based index of the given variable kind appearing in e, or -1.
inline int max_index(const Expr& e, Variable::Kind kind) {
  if (!e.valid()) return -1;
  switch (e.op()) {
    case Op::lit:
      return -1;
    case Op::state:
      return kind == Variable::Kind::state ? e.index() : -1;
    case Op::param:
      return kind == Variable::Kind::param ? e.index() : -1;
    default:
      break;
  }
  int m = max_index(e.lhs(), kind);
  if (detail::is_binary(e.op())) m = std::max(m, max_index(e.rhs(), kind));
  return m;
}

// ---------------------------------------------------------------------------
// Printing. Output re-parses to a structurally equal tree.

namespace detail {

inline int precedence(const Expr& e) {
  switch (e.op()) {
    case Op::add:
    case Op::sub:
      return 1;
    case Op::mul:
    case Op::div:
      return 2;
    case Op::neg:
      return 3;
    case Op::pow:
      return 4;
    default:
      return 5;
  }
}

inline void append_number(std::string& out, double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

inline void write(const Expr& e, std::string& out);

inline void write_wrapped(const Expr& e, std::string& out, bool parens) {
  if (parens) out.push_back('(');
  write(e, out);
  if (parens) out.push_back(')');
}

inline void write(const Expr& e, std::string& out) {
  switch (e.op()) {
    case Op::lit:
      if (std::signbit(e.literal())) {
        out += "(-";
        append_number(out, -e.literal());
        out += ")";
      } else {
        append_number(out, e.literal());
      }
      return;
    case Op::state:
      out += "x" + std::to_string(e.index() + 1);
      return;
    case Op::param:
      out += "r" + std::to_string(e.index() + 1);
      return;
    case Op::sin:
    case Op::cos:
    case Op::exp:
    case Op::sqrt: {
      static constexpr const char* names[] = {"sin", "cos", "exp", "sqrt"};
      out += names[static_cast<int>(e.op()) - static_cast<int>(Op::sin)];
      write_wrapped(e.lhs(), out, true);
      return;
    }
    case Op::neg: {
      const Expr a = e.lhs();
      // A bare non-negative literal after '-' would re-parse as a negative literal.
      bool parens = precedence(a) < 3 || (a.op() == Op::lit && !std::signbit(a.literal()));
      out.push_back('-');
      write_wrapped(a, out, parens);
      return;
    }
    case Op::pow: {
      write_wrapped(e.lhs(), out, precedence(e.lhs()) < 5);
      out.push_back('^');
      if (e.exponent() < 0) {
        out += "(" + std::to_string(e.exponent()) + ")";
      } else {
        out += std::to_string(e.exponent());
      }
      return;
    }
    case Op::add:
    case Op::sub:
    case Op::mul:
    case Op::div: {
      const int p = precedence(e);
      write_wrapped(e.lhs(), out, precedence(e.lhs()) < p);
      switch (e.op()) {
        case Op::add: out += " + "; break;
        case Op::sub: out += " - "; break;
        case Op::mul: out += "*"; break;
        default: out += "/"; break;
      }
      write_wrapped(e.rhs(), out, precedence(e.rhs()) <= p);
      return;
    }
  }
}

}  // namespace detail

inline std::string to_string(const Expr& e) {
  std::string out;
  if (e.valid()) detail::write(e, out);
  return out;
}

// ---------------------------------------------------------------------------
// Parsing.
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' integer)?
//   primary := number | 'pi' | x<k> | r<k> | func '(' expr ')' | '(' expr ')'
//
// '-' directly followed by a number literal (not raised to a power) yields a
// negative literal.

namespace detail {

struct Token {
  enum class Kind { number, ident, op, end } kind;
  std::string_view text;
  std::size_t offset;
  double number = 0.0;
};

inline std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> toks;
  std::size_t i = 0;
  auto is_digit = [](char c) { return c >= '0' && c <= '9'; };
  auto is_alpha = [](char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; };
  while (i < s.size()) {
    char c = s[i];
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      ++i;
      continue;
    }
    if (is_digit(c) || (c == '.' && i + 1 < s.size() && is_digit(s[i + 1]))) {
      std::size_t j = i;
      while (j < s.size() && is_digit(s[j])) ++j;
      if (j < s.size() && s[j] == '.') {
        ++j;
        while (j < s.size() && is_digit(s[j])) ++j;
      }
      if (j < s.size() && (s[j] == 'e' || s[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < s.size() && (s[k] == '+' || s[k] == '-')) ++k;
        if (k < s.size() && is_digit(s[k])) {
          while (k < s.size() && is_digit(s[k])) ++k;
          j = k;
        } else {
          throw ParseError("malformed exponent in number", j);
        }
      }
      double v = 0.0;
      auto res = std::from_chars(s.data() + i, s.data() + j, v);
      if (res.ec != std::errc() || res.ptr != s.data() + j || !std::isfinite(v)) {
        throw ParseError("invalid number literal", i);
      }
      toks.push_back({Token::Kind::number, s.substr(i, j - i), i, v});
      i = j;
      continue;
    }
    if (is_alpha(c)) {
      std::size_t j = i;
      while (j < s.size() && (is_alpha(s[j]) || is_digit(s[j]))) ++j;
      toks.push_back({Token::Kind::ident, s.substr(i, j - i), i});
      i = j;
      continue;
    }
    if (c == '+' || c == '-' || c == '*' || c == '/' || c == '^' || c == '(' || c == ')') {
      toks.push_back({Token::Kind::op, s.substr(i, 1), i});
      ++i;
      continue;
    }
    throw ParseError(std::string("unexpected character '") + c + "'", i);
  }
  toks.push_back({Token::Kind::end, {}, s.size()});
  return toks;
}

class Parser {
 public:
  Parser(std::string_view text, int n_state, int n_param)
      : toks_(tokenize(text)), n_state_(n_state), n_param_(n_param) {}

  Expr parse() {
    if (toks_.front().kind == Token::Kind::end) throw ParseError("empty expression", 0);
    Expr e = expr();
    if (peek().kind != Token::Kind::end) throw ParseError("unexpected token '" + std::string(peek().text) + "'", peek().offset);
    return e;
  }

 private:
  const Token& peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  bool is_op(const Token& t, char c) const { return t.kind == Token::Kind::op && t.text[0] == c; }
  const Token& take() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }
  void expect(char c) {
    if (!is_op(peek(), c)) throw ParseError(std::string("expected '") + c + "'", peek().offset);
    ++pos_;
  }

  Expr expr() {
    Expr e = term();
    while (is_op(peek(), '+') || is_op(peek(), '-')) {
      Op op = take().text[0] == '+' ? Op::add : Op::sub;
      e = raw_binary(op, e, term());
    }
    return e;
  }

  Expr term() {
    Expr e = unary();
    while (is_op(peek(), '*') || is_op(peek(), '/')) {
      Op op = take().text[0] == '*' ? Op::mul : Op::div;
      e = raw_binary(op, e, unary());
    }
    return e;
  }

  Expr unary() {
    if (is_op(peek(), '-')) {
      if (peek(1).kind == Token::Kind::number && !is_op(peek(2), '^')) {
        take();
        return lit(-take().number);
      }
      take();
      return raw_unary(Op::neg, unary());
    }
    return power();
  }

  Expr power() {
    Expr base = primary();
    if (!is_op(peek(), '^')) return base;
    take();
    const bool paren = is_op(peek(), '(');
    if (paren) take();
    int sign = 1;
    if (is_op(peek(), '-')) {
      sign = -1;
      take();
    } else if (is_op(peek(), '+')) {
      take();
    }
    const Token& t = peek();
    if (t.kind != Token::Kind::number || t.number != std::floor(t.number) || std::abs(t.number) > 1e6) {
      throw ParseError("exponent must be an integer literal", t.offset);
    }
    take();
    if (paren) expect(')');
    return raw_pow(base, sign * static_cast<int>(t.number));
  }

  Expr primary() {
    const Token& t = peek();
    if (t.kind == Token::Kind::number) {
      take();
      return lit(t.number);
    }
    if (is_op(t, '(')) {
      take();
      Expr e = expr();
      expect(')');
      return e;
    }
    if (t.kind == Token::Kind::ident) {
      take();
      if (is_op(peek(), '(')) {
        Op op;
        if (t.text == "sin") op = Op::sin;
        else if (t.text == "cos") op = Op::cos;
        else if (t.text == "exp") op = Op::exp;
        else if (t.text == "sqrt") op = Op::sqrt;
        else throw ParseError("unknown function '" + std::string(t.text) + "'", t.offset);
        take();
        Expr arg = expr();
        expect(')');
        return raw_unary(op, arg);
      }
      if (t.text == "pi") return lit(std::numbers::pi);
      return variable_ref(t);
    }
    if (t.kind == Token::Kind::end) throw ParseError("unexpected end of expression", t.offset);
    throw ParseError("unexpected token '" + std::string(t.text) + "'", t.offset);
  }

  Expr variable_ref(const Token& t) {
    const char head = t.text[0];
    std::string_view digits = t.text.substr(1);
    bool numeric = !digits.empty() && digits[0] != '0';
    for (char c : digits) numeric = numeric && c >= '0' && c <= '9';
    if ((head != 'x' && head != 'r') || !numeric) {
      throw ParseError("unknown identifier '" + std::string(t.text) + "'", t.offset);
    }
    int k = 0;
    auto res = std::from_chars(digits.data(), digits.data() + digits.size(), k);
    const int limit = head == 'x' ? n_state_ : n_param_;
    if (res.ec != std::errc() || k < 1 || k > limit) {
      throw ParseError("variable index out of range '" + std::string(t.text) + "'", t.offset);
    }
    return head == 'x' ? state(k - 1) : param(k - 1);
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  int n_state_;
  int n_param_;
};

}  // namespace detail

/// Parses `text` as an expression in x1..x{n_state} and r1..r{n_param}.
inline Expr parse(std::string_view text, int n_state, int n_param) {
  return detail::Parser(text, n_state, n_param).parse();
}

// ---------------------------------------------------------------------------
// Differentiation.

namespace detail {

class Differentiator {
 public:
  explicit Differentiator(Variable wrt) : wrt_(wrt) {}

  Expr operator()(const Expr& e) {
    if (auto it = memo_.find(e.node()); it != memo_.end()) return it->second;
    Expr d = compute(e);
    memo_.emplace(e.node(), d);
    return d;
  }

 private:
  Expr compute(const Expr& e) {
    switch (e.op()) {
      case Op::lit:
        return lit(0.0);
      case Op::state:
        return lit(wrt_.kind == Variable::Kind::state && wrt_.index == e.index() ? 1.0 : 0.0);
      case Op::param:
        return lit(wrt_.kind == Variable::Kind::param && wrt_.index == e.index() ? 1.0 : 0.0);
      case Op::neg:
        return neg((*this)(e.lhs()));
      case Op::add:
        return (*this)(e.lhs()) + (*this)(e.rhs());
      case Op::sub:
        return (*this)(e.lhs()) - (*this)(e.rhs());
      case Op::mul: {
        const Expr a = e.lhs(), b = e.rhs();
        return (*this)(a) * b + a * (*this)(b);
      }
      case Op::div: {
        const Expr a = e.lhs(), b = e.rhs();
        const Expr da = (*this)(a), db = (*this)(b);
        if (db.is_literal(0.0)) return da / b;
        return (da * b - a * db) / pow(b, 2);
      }
      case Op::pow: {
        const Expr a = e.lhs();
        const int k = e.exponent();
        return (lit(static_cast<double>(k)) * pow(a, k - 1)) * (*this)(a);
      }
      case Op::sin:
        return cos(e.lhs()) * (*this)(e.lhs());
      case Op::cos:
        return neg(sin(e.lhs())) * (*this)(e.lhs());
      case Op::exp:
        return e * (*this)(e.lhs());
      case Op::sqrt:
        return (*this)(e.lhs()) / (lit(2.0) * e);
    }
    return lit(0.0);
  }

  Variable wrt_;
  std::unordered_map<const Node*, Expr> memo_;
};

}  // namespace detail

/// Symbolic partial derivative of e with respect to `wrt`.
inline Expr differentiate(const Expr& e, Variable wrt) { return detail::Differentiator(wrt)(e); }

// ---------------------------------------------------------------------------
// Evaluation.

namespace detail {

inline double checked_div(double a, double b) {
  if (b == 0.0) throw DomainError("division by zero");
  return a / b;
}
inline double checked_sqrt(double a) {
  if (a < 0.0) throw DomainError("sqrt of negative value");
  return std::sqrt(a);
}
inline double checked_pow(double a, int k) {
  if (k < 0 && a == 0.0) throw DomainError("negative power of zero");
  return ipow(a, k);
}

inline double eval(const Expr& e, std::span<const double> q, std::span<const double> r) {
  switch (e.op()) {
    case Op::lit: return e.literal();
    case Op::state: return q[static_cast<std::size_t>(e.index())];
    case Op::param: return r[static_cast<std::size_t>(e.index())];
    case Op::neg: return -eval(e.lhs(), q, r);
    case Op::add: return eval(e.lhs(), q, r) + eval(e.rhs(), q, r);
    case Op::sub: return eval(e.lhs(), q, r) - eval(e.rhs(), q, r);
    case Op::mul: return eval(e.lhs(), q, r) * eval(e.rhs(), q, r);
    case Op::div: return checked_div(eval(e.lhs(), q, r), eval(e.rhs(), q, r));
    case Op::pow: return checked_pow(eval(e.lhs(), q, r), e.exponent());
    case Op::sin: return std::sin(eval(e.lhs(), q, r));
    case Op::cos: return std::cos(eval(e.lhs(), q, r));
    case Op::exp: return std::exp(eval(e.lhs(), q, r));
    case Op::sqrt: return checked_sqrt(eval(e.lhs(), q, r));
  }
  return 0.0;
}

}  // namespace detail

/// Evaluates e at state q and parameters r. Throws DomainError on division by
/// zero, square roots of negative numbers and non-finite results.
inline double evaluate(const Expr& e, std::span<const double> q, std::span<const double> r) {
  if (max_index(e, Variable::Kind::state) >= static_cast<int>(q.size()) ||
      max_index(e, Variable::Kind::param) >= static_cast<int>(r.size())) {
    throw DimensionError("evaluate: variable index exceeds the supplied vectors");
  }
  const double v = detail::eval(e, q, r);
  if (!std::isfinite(v)) throw DomainError("non-finite result");
  return v;
}

// ---------------------------------------------------------------------------
// Compiled evaluation of a batch of expressions with common-subexpression
// sharing. Used on every right-hand-side evaluation of the integrators.

class Tape {
 public:
  Tape() = default;

  Tape(std::span<const Expr> outputs, int n_state, int n_param) : n_state_(n_state), n_param_(n_param) {
    std::unordered_map<const Node*, std::int32_t> by_node;
    std::unordered_map<Key, std::int32_t, KeyHash> by_key;
    outputs_.reserve(outputs.size());
    for (const Expr& e : outputs) outputs_.push_back(emit(e, by_node, by_key));
  }

  std::size_t size() const noexcept { return code_.size(); }
  std::size_t n_outputs() const noexcept { return outputs_.size(); }

  /// Writes every output into `out` (length n_outputs()).
  void evaluate(std::span<const double> q, std::span<const double> r, std::span<double> out) const {
    thread_local std::vector<double> slots;
    slots.resize(code_.size());
    for (std::size_t i = 0; i < code_.size(); ++i) {
      const Instr& in = code_[i];
      double v = 0.0;
      switch (in.op) {
        case Op::lit: v = in.value; break;
        case Op::state: v = q[static_cast<std::size_t>(in.a)]; break;
        case Op::param: v = r[static_cast<std::size_t>(in.a)]; break;
        case Op::neg: v = -slots[in.a]; break;
        case Op::add: v = slots[in.a] + slots[in.b]; break;
        case Op::sub: v = slots[in.a] - slots[in.b]; break;
        case Op::mul: v = slots[in.a] * slots[in.b]; break;
        case Op::div: v = detail::checked_div(slots[in.a], slots[in.b]); break;
        case Op::pow: v = detail::checked_pow(slots[in.a], in.b); break;
        case Op::sin: v = std::sin(slots[in.a]); break;
        case Op::cos: v = std::cos(slots[in.a]); break;
        case Op::exp: v = std::exp(slots[in.a]); break;
        case Op::sqrt: v = detail::checked_sqrt(slots[in.a]); break;
      }
      slots[i] = v;
    }
    for (std::size_t k = 0; k < outputs_.size(); ++k) {
      const double v = slots[static_cast<std::size_t>(outputs_[k])];
      if (!std::isfinite(v)) throw DomainError("non-finite result");
      out[k] = v;
    }
  }

  int n_state() const noexcept { return n_state_; }
  int n_param() const noexcept { return n_param_; }

 private:
  struct Instr {
    Op op;
    std::int32_t a;
    std::int32_t b;
    double value;
  };
  struct Key {
    Op op;
    std::int32_t a;
    std::int32_t b;
    std::uint64_t bits;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept {
      std::size_t h = static_cast<std::size_t>(k.op);
      h = detail::mix(h, static_cast<std::size_t>(k.a));
      h = detail::mix(h, static_cast<std::size_t>(k.b));
      return detail::mix(h, std::hash<std::uint64_t>{}(k.bits));
    }
  };

  std::int32_t emit(const Expr& e, std::unordered_map<const Node*, std::int32_t>& by_node,
                    std::unordered_map<Key, std::int32_t, KeyHash>& by_key) {
    if (auto it = by_node.find(e.node()); it != by_node.end()) return it->second;
    Key key{e.op(), -1, -1, 0};
    switch (e.op()) {
      case Op::lit:
        key.bits = std::bit_cast<std::uint64_t>(e.literal());
        break;
      case Op::state:
        if (e.index() >= n_state_) throw DimensionError("tape: state index out of range");
        key.a = e.index();
        break;
      case Op::param:
        if (e.index() >= n_param_) throw DimensionError("tape: parameter index out of range");
        key.a = e.index();
        break;
      case Op::pow:
        key.a = emit(e.lhs(), by_node, by_key);
        key.b = e.exponent();
        break;
      default:
        key.a = emit(e.lhs(), by_node, by_key);
        if (detail::is_binary(e.op())) key.b = emit(e.rhs(), by_node, by_key);
        break;
    }
    std::int32_t slot;
    if (auto it = by_key.find(key); it != by_key.end()) {
      slot = it->second;
    } else {
      slot = static_cast<std::int32_t>(code_.size());
      code_.push_back({key.op, key.a, key.b, e.op() == Op::lit ? e.literal() : 0.0});
      by_key.emplace(key, slot);
    }
    by_node.emplace(e.node(), slot);
    return slot;
  }

  std::vector<Instr> code_;
  std::vector<std::int32_t> outputs_;
  int n_state_ = 0;
  int n_param_ = 0;
};

}  // namespace bsb::sym
