#pragma once

// Scalar expressions: parsing, evaluation, symbolic differentiation.
//
// Grammar (whitespace insignificant):
//   expr   := term (("+"|"-") term)*
//   term   := factor (("*"|"/") factor)*
//   factor := "-" factor | power
//   power  := atom ("^" factor)?
//   atom   := number | name | name "(" expr ")" | "(" expr ")"
//
// "^" therefore binds tighter than unary minus and is right-associative:
// -x^2 is -(x^2) and x^2^3 is x^(2^3).

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "eshape/error.hpp"

namespace eshape::expr {

enum class Op { Number, Name, Neg, Add, Sub, Mul, Div, Pow, Call };
enum class Func { Sin, Cos, Tan, Exp, Log, Sqrt, Abs };

inline std::string_view func_name(Func f) {
  switch (f) {
    case Func::Sin: return "sin";
    case Func::Cos: return "cos";
    case Func::Tan: return "tan";
    case Func::Exp: return "exp";
    case Func::Log: return "log";
    case Func::Sqrt: return "sqrt";
    case Func::Abs: return "abs";
  }
  return "?";
}

inline std::optional<Func> lookup_func(std::string_view name) {
  static constexpr std::array<std::pair<std::string_view, Func>, 7> table{{
      {"sin", Func::Sin}, {"cos", Func::Cos}, {"tan", Func::Tan}, {"exp", Func::Exp},
      {"log", Func::Log}, {"sqrt", Func::Sqrt}, {"abs", Func::Abs}}};
  for (const auto& [n, f] : table)
    if (n == name) return f;
  return std::nullopt;
}

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
  Op op = Op::Number;
  double value = 0.0;  // Number
  std::string name;    // Name
  Func func = Func::Sin;
  NodePtr lhs;  // unary operand / call argument / left operand
  NodePtr rhs;
};

/// Immutable expression tree; copies share structure.
class Expr {
 public:
  Expr() : Expr(number(0.0)) {}

  static Expr number(double v) {
    auto n = std::make_shared<Node>();
    n->op = Op::Number;
    n->value = v;
    return Expr(std::move(n));
  }
  static Expr variable(std::string name) {
    auto n = std::make_shared<Node>();
    n->op = Op::Name;
    n->name = std::move(name);
    return Expr(std::move(n));
  }
  static Expr unary(Op op, const Expr& a) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->lhs = a.node_;
    return Expr(std::move(n));
  }
  static Expr binary(Op op, const Expr& a, const Expr& b) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->lhs = a.node_;
    n->rhs = b.node_;
    return Expr(std::move(n));
  }
  static Expr call(Func f, const Expr& a) {
    auto n = std::make_shared<Node>();
    n->op = Op::Call;
    n->func = f;
    n->lhs = a.node_;
    return Expr(std::move(n));
  }

  const Node& node() const { return *node_; }
  Op op() const { return node_->op; }
  Expr lhs() const { return Expr(node_->lhs); }
  Expr rhs() const { return Expr(node_->rhs); }

  bool is_number() const { return node_->op == Op::Number; }
  bool is_number(double v) const { return is_number() && node_->value == v; }

 private:
  explicit Expr(NodePtr n) : node_(std::move(n)) {}
  NodePtr node_;
};

/// Variable bindings for evaluation.  Every free name must be bound.
using Env = std::unordered_map<std::string, double>;

// Builders with only the trivial identities (0 and 1 absorption, numeric
// folding); they keep derivative trees from growing without bound.

inline Expr operator+(const Expr& a, const Expr& b) {
  if (a.is_number(0.0)) return b;
  if (b.is_number(0.0)) return a;
  if (a.is_number() && b.is_number()) return Expr::number(a.node().value + b.node().value);
  return Expr::binary(Op::Add, a, b);
}
inline Expr operator-(const Expr& a) {
  if (a.is_number()) return Expr::number(-a.node().value);
  if (a.op() == Op::Neg) return a.lhs();
  return Expr::unary(Op::Neg, a);
}
inline Expr operator-(const Expr& a, const Expr& b) {
  if (b.is_number(0.0)) return a;
  if (a.is_number(0.0)) return -b;
  if (a.is_number() && b.is_number()) return Expr::number(a.node().value - b.node().value);
  return Expr::binary(Op::Sub, a, b);
}
inline Expr operator*(const Expr& a, const Expr& b) {
  if (a.is_number(0.0) || b.is_number(0.0)) return Expr::number(0.0);
  if (a.is_number(1.0)) return b;
  if (b.is_number(1.0)) return a;
  if (a.is_number() && b.is_number()) return Expr::number(a.node().value * b.node().value);
  return Expr::binary(Op::Mul, a, b);
}
inline Expr operator/(const Expr& a, const Expr& b) {
  if (b.is_number(1.0)) return a;
  if (a.is_number(0.0) && !b.is_number(0.0)) return Expr::number(0.0);
  return Expr::binary(Op::Div, a, b);
}
inline Expr pow(const Expr& a, const Expr& b) {
  if (b.is_number(1.0)) return a;
  if (b.is_number(0.0)) return Expr::number(1.0);
  return Expr::binary(Op::Pow, a, b);
}
inline Expr call(Func f, const Expr& a) { return Expr::call(f, a); }

// ---------------------------------------------------------------------------
// Evaluation kernels shared by the tree walker and the compiled program so
// that both give bit-identical results.

namespace detail {

inline double checked_div(double a, double b) {
  if (b == 0.0) throw DomainError("division by zero");
  return a / b;
}

inline double checked_pow(double a, double b) {
  if (a < 0.0 && b != std::trunc(b))
    throw DomainError("negative base with non-integer exponent");
  if (a == 0.0 && b < 0.0) throw DomainError("zero raised to a negative power");
  return std::pow(a, b);
}

inline double apply(Func f, double x) {
  switch (f) {
    case Func::Sin: return std::sin(x);
    case Func::Cos: return std::cos(x);
    case Func::Tan: return std::tan(x);
    case Func::Exp: return std::exp(x);
    case Func::Log:
      if (!(x > 0.0)) throw DomainError("log of non-positive value");
      return std::log(x);
    case Func::Sqrt:
      if (x < 0.0) throw DomainError("sqrt of negative value");
      return std::sqrt(x);
    case Func::Abs: return std::fabs(x);
  }
  return 0.0;
}

inline double apply(Op op, double a, double b) {
  switch (op) {
    case Op::Add: return a + b;
    case Op::Sub: return a - b;
    case Op::Mul: return a * b;
    case Op::Div: return checked_div(a, b);
    case Op::Pow: return checked_pow(a, b);
    default: return 0.0;
  }
}

inline double finite_or_throw(double v) {
  if (!std::isfinite(v)) throw DomainError("non-finite result");
  return v;
}

inline double eval_node(const Node& n, const Env& env) {
  switch (n.op) {
    case Op::Number: return n.value;
    case Op::Name: {
      auto it = env.find(n.name);
      if (it == env.end()) throw UnboundNameError(n.name);
      return it->second;
    }
    case Op::Neg: return -eval_node(*n.lhs, env);
    case Op::Call: return apply(n.func, eval_node(*n.lhs, env));
    default: {
      double a = eval_node(*n.lhs, env);
      double b = eval_node(*n.rhs, env);
      return apply(n.op, a, b);
    }
  }
}

}  // namespace detail

inline double eval(const Expr& e, const Env& env) {
  return detail::finite_or_throw(detail::eval_node(e.node(), env));
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

class Parser {
 public:
  explicit Parser(std::string_view text) : s_(text) {}

  Expr parse_all() {
    Expr e = parse_expr();
    skip_ws();
    if (pos_ != s_.size()) fail("unexpected character '" + std::string(1, s_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, pos_); }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  Expr parse_expr() {
    Expr lhs = parse_term();
    for (;;) {
      if (accept('+'))
        lhs = Expr::binary(Op::Add, lhs, parse_term());
      else if (accept('-'))
        lhs = Expr::binary(Op::Sub, lhs, parse_term());
      else
        return lhs;
    }
  }

  Expr parse_term() {
    Expr lhs = parse_factor();
    for (;;) {
      if (accept('*'))
        lhs = Expr::binary(Op::Mul, lhs, parse_factor());
      else if (accept('/'))
        lhs = Expr::binary(Op::Div, lhs, parse_factor());
      else
        return lhs;
    }
  }

  Expr parse_factor() {
    if (accept('-')) return Expr::unary(Op::Neg, parse_factor());
    return parse_power();
  }

  Expr parse_power() {
    Expr base = parse_atom();
    if (accept('^')) return Expr::binary(Op::Pow, base, parse_factor());
    return base;
  }

  Expr parse_atom() {
    skip_ws();
    if (pos_ >= s_.size()) fail("unexpected end of input");
    char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      Expr inner = parse_expr();
      if (!accept(')')) fail("expected ')'");
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c))) {
      std::size_t start = pos_;
      while (pos_ < s_.size() &&
             (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
        ++pos_;
      std::string name(s_.substr(start, pos_ - start));
      std::size_t after_name = pos_;
      skip_ws();
      if (pos_ < s_.size() && s_[pos_] == '(') {
        auto f = lookup_func(name);
        if (!f) {
          pos_ = start;
          fail("unknown function '" + name + "'");
        }
        ++pos_;
        Expr arg = parse_expr();
        if (!accept(')')) fail("expected ')' after function argument");
        return Expr::call(*f, arg);
      }
      pos_ = after_name;
      return Expr::variable(std::move(name));
    }
    fail("unexpected character '" + std::string(1, c) + "'");
  }

  Expr parse_number() {
    std::size_t start = pos_;
    auto digits = [&] {
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    };
    digits();
    if (pos_ < s_.size() && s_[pos_] == '.') {
      ++pos_;
      digits();
    }
    if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
      std::size_t mark = pos_;
      ++pos_;
      if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
      if (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_])))
        digits();
      else
        pos_ = mark;  // "2e" is the number 2 followed by the name e
    }
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s_.data() + start, s_.data() + pos_, v);
    if (ec != std::errc() || ptr != s_.data() + pos_) {
      pos_ = start;
      fail("malformed number");
    }
    return Expr::number(v);
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Parses `text`; throws ParseError carrying the byte offset of the problem.
inline Expr parse(std::string_view text) { return detail::Parser(text).parse_all(); }

// ---------------------------------------------------------------------------
// Structural queries

inline void collect_names(const Expr& e, std::set<std::string>& out) {
  const Node& n = e.node();
  if (n.op == Op::Name) out.insert(n.name);
  if (n.lhs) collect_names(e.lhs(), out);
  if (n.rhs) collect_names(e.rhs(), out);
}

inline std::set<std::string> free_names(const Expr& e) {
  std::set<std::string> out;
  collect_names(e, out);
  return out;
}

inline bool depends_on(const Expr& e, std::string_view v) {
  const Node& n = e.node();
  if (n.op == Op::Name) return n.name == v;
  return (n.lhs && depends_on(e.lhs(), v)) || (n.rhs && depends_on(e.rhs(), v));
}

/// Simultaneous substitution of names by expressions.
inline Expr substitute(const Expr& e, const std::map<std::string, Expr>& repl) {
  const Node& n = e.node();
  switch (n.op) {
    case Op::Number: return e;
    case Op::Name: {
      auto it = repl.find(n.name);
      return it == repl.end() ? e : it->second;
    }
    case Op::Neg: return Expr::unary(Op::Neg, substitute(e.lhs(), repl));
    case Op::Call: return Expr::call(n.func, substitute(e.lhs(), repl));
    default: return Expr::binary(n.op, substitute(e.lhs(), repl), substitute(e.rhs(), repl));
  }
}

// ---------------------------------------------------------------------------
// Printing.  Output re-parses to an evaluation-equivalent tree.

namespace detail {

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", std::fabs(v));
  std::string s(buf);
  return v < 0.0 || std::signbit(v) ? "(-" + s + ")" : s;
}

inline void print(const Node& n, std::string& out) {
  switch (n.op) {
    case Op::Number: out += format_number(n.value); return;
    case Op::Name: out += n.name; return;
    case Op::Neg:
      out += "(-";
      print(*n.lhs, out);
      out += ')';
      return;
    case Op::Call:
      out += func_name(n.func);
      out += '(';
      print(*n.lhs, out);
      out += ')';
      return;
    default: break;
  }
  static constexpr std::string_view sym = "??+-*/^";
  out += '(';
  print(*n.lhs, out);
  out += ' ';
  out += sym[static_cast<int>(n.op) - static_cast<int>(Op::Neg) + 1];
  out += ' ';
  print(*n.rhs, out);
  out += ')';
}

}  // namespace detail

inline std::string to_string(const Expr& e) {
  std::string out;
  detail::print(e.node(), out);
  return out;
}

// ---------------------------------------------------------------------------
// Symbolic differentiation

inline Expr diff(const Expr& e, std::string_view v) {
  const Node& n = e.node();
  switch (n.op) {
    case Op::Number: return Expr::number(0.0);
    case Op::Name: return Expr::number(n.name == v ? 1.0 : 0.0);
    case Op::Neg: return -diff(e.lhs(), v);
    case Op::Add: return diff(e.lhs(), v) + diff(e.rhs(), v);
    case Op::Sub: return diff(e.lhs(), v) - diff(e.rhs(), v);
    case Op::Mul: {
      Expr a = e.lhs(), b = e.rhs();
      return diff(a, v) * b + a * diff(b, v);
    }
    case Op::Div: {
      Expr a = e.lhs(), b = e.rhs();
      Expr da = diff(a, v), db = diff(b, v);
      if (db.is_number(0.0)) return da / b;
      return (da * b - a * db) / (b * b);
    }
    case Op::Pow: {
      Expr a = e.lhs(), b = e.rhs();
      Expr da = diff(a, v);
      if (!depends_on(b, v)) return b * pow(a, b - Expr::number(1.0)) * da;
      // d(a^b) = a^b (b' log a + b a'/a)
      return e * (diff(b, v) * call(Func::Log, a) + b * da / a);
    }
    case Op::Call: {
      Expr a = e.lhs();
      Expr da = diff(a, v);
      if (da.is_number(0.0)) return Expr::number(0.0);
      switch (n.func) {
        case Func::Sin: return call(Func::Cos, a) * da;
        case Func::Cos: return -(call(Func::Sin, a) * da);
        case Func::Tan: return da / (call(Func::Cos, a) * call(Func::Cos, a));
        case Func::Exp: return e * da;
        case Func::Log: return da / a;
        case Func::Sqrt: return da / (Expr::number(2.0) * e);
        case Func::Abs: return da * a / e;
      }
    }
  }
  return Expr::number(0.0);
}

// ---------------------------------------------------------------------------
// Compiled form: names resolved to slots of a flat value array, evaluated by
// a small stack machine.  Used in the inner loops of quadratures.

class Program {
 public:
  Program() = default;

  /// Compiles `e` against the slot layout `slots`; throws UnboundNameError
  /// if a free name has no slot.
  Program(const Expr& e, std::span<const std::string> slots) {
    int depth = 0;
    emit(e.node(), slots, depth);
  }

  double operator()(std::span<const double> values) const {
    if (code_.empty()) return 0.0;
    std::array<double, kInlineStack> inline_stack;
    std::vector<double> heap_stack;
    double* st = inline_stack.data();
    if (max_depth_ > kInlineStack) {
      heap_stack.resize(static_cast<std::size_t>(max_depth_));
      st = heap_stack.data();
    }
    int top = -1;
    for (const Instr& in : code_) {
      switch (in.op) {
        case Op::Number: st[++top] = in.value; break;
        case Op::Name: st[++top] = values[in.slot]; break;
        case Op::Neg: st[top] = -st[top]; break;
        case Op::Call: st[top] = detail::apply(in.func, st[top]); break;
        default:
          st[top - 1] = detail::apply(in.op, st[top - 1], st[top]);
          --top;
          break;
      }
    }
    return detail::finite_or_throw(st[0]);
  }

 private:
  static constexpr int kInlineStack = 64;

  struct Instr {
    Op op;
    double value = 0.0;
    std::size_t slot = 0;
    Func func = Func::Sin;
  };

  void emit(const Node& n, std::span<const std::string> slots, int& depth) {
    switch (n.op) {
      case Op::Number:
        code_.push_back({Op::Number, n.value});
        push(depth);
        return;
      case Op::Name: {
        auto it = std::find(slots.begin(), slots.end(), n.name);
        if (it == slots.end()) throw UnboundNameError(n.name);
        code_.push_back({Op::Name, 0.0, static_cast<std::size_t>(it - slots.begin())});
        push(depth);
        return;
      }
      case Op::Neg:
        emit(*n.lhs, slots, depth);
        code_.push_back({Op::Neg});
        return;
      case Op::Call:
        emit(*n.lhs, slots, depth);
        code_.push_back({Op::Call, 0.0, 0, n.func});
        return;
      default:
        emit(*n.lhs, slots, depth);
        emit(*n.rhs, slots, depth);
        code_.push_back({n.op});
        --depth;
        return;
    }
  }

  void push(int& depth) {
    ++depth;
    max_depth_ = std::max(max_depth_, depth);
  }

  std::vector<Instr> code_;
  int max_depth_ = 0;
};

}  // namespace eshape::expr
