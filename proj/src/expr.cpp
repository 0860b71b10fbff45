#include "beamlab/expr.hpp"

#include <cctype>
#include <cmath>
#include <sstream>

namespace beamlab {

namespace {

using Op = Expr::Op;
using NodePtr = Expr::NodePtr;
using Node = Expr::Node;

NodePtr mk(Op op, NodePtr a = nullptr, NodePtr b = nullptr) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}
NodePtr cst(double c) {
  auto n = std::make_shared<Node>();
  n->op = Op::Const;
  n->val = c;
  return n;
}
bool is_c(const NodePtr& n, double v) { return n->op == Op::Const && n->val == v; }

NodePtr add(NodePtr a, NodePtr b) {
  if (a->op == Op::Const && b->op == Op::Const) return cst(a->val + b->val);
  if (is_c(a, 0)) return b;
  if (is_c(b, 0)) return a;
  return mk(Op::Add, a, b);
}
NodePtr sub(NodePtr a, NodePtr b) {
  if (a->op == Op::Const && b->op == Op::Const) return cst(a->val - b->val);
  if (is_c(b, 0)) return a;
  if (is_c(a, 0)) return b->op == Op::Const ? cst(-b->val) : mk(Op::Neg, b);
  return mk(Op::Sub, a, b);
}
NodePtr mul(NodePtr a, NodePtr b) {
  if (a->op == Op::Const && b->op == Op::Const) return cst(a->val * b->val);
  if (is_c(a, 0) || is_c(b, 0)) return cst(0);
  if (is_c(a, 1)) return b;
  if (is_c(b, 1)) return a;
  if (b->op == Op::Const) std::swap(a, b);
  return mk(Op::Mul, a, b);
}
NodePtr dvd(NodePtr a, NodePtr b) {
  if (a->op == Op::Const && b->op == Op::Const) return cst(a->val / b->val);
  if (is_c(a, 0)) return cst(0);
  if (is_c(b, 1)) return a;
  return mk(Op::Div, a, b);
}
NodePtr neg(NodePtr a) {
  if (a->op == Op::Const) return cst(-a->val);
  if (a->op == Op::Neg) return a->a;
  return mk(Op::Neg, a);
}
NodePtr powi(NodePtr a, int p) {
  if (p == 0) return cst(1);
  if (p == 1) return a;
  if (a->op == Op::Const) return cst(std::pow(a->val, p));
  auto n = std::make_shared<Node>();
  n->op = Op::PowInt;
  n->a = a;
  n->ipow = p;
  return n;
}
NodePtr fn(Op op, NodePtr a) {
  if (a->op == Op::Const) {
    double x = a->val;
    switch (op) {
      case Op::Sin: return cst(std::sin(x));
      case Op::Cos: return cst(std::cos(x));
      case Op::Tan: return cst(std::tan(x));
      case Op::Exp: return cst(std::exp(x));
      case Op::Log: return cst(std::log(x));
      case Op::Sqrt: return cst(std::sqrt(x));
      case Op::Tanh: return cst(std::tanh(x));
      case Op::Atan: return cst(std::atan(x));
      default: break;
    }
  }
  return mk(op, a);
}

class Parser {
public:
  Parser(const std::string& s, const std::vector<std::string>& vars) : s_(s), vars_(vars) {}

  NodePtr run() {
    NodePtr e = expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return e;
  }

private:
  [[noreturn]] void fail(const std::string& m) {
    throw Error("config", "expression \"" + s_ + "\" at " + std::to_string(pos_) + ": " + m);
  }
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool eat(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  NodePtr expr() {
    NodePtr a = term();
    for (;;) {
      if (eat('+')) a = add(a, term());
      else if (eat('-')) a = sub(a, term());
      else return a;
    }
  }
  NodePtr term() {
    NodePtr a = unary();
    for (;;) {
      if (eat('*')) a = mul(a, unary());
      else if (eat('/')) a = dvd(a, unary());
      else return a;
    }
  }
  NodePtr unary() {
    if (eat('-')) return neg(unary());
    if (eat('+')) return unary();
    return power();
  }
  NodePtr power() {
    NodePtr base = primary();
    if (eat('^')) {
      NodePtr ex = unary();
      if (ex->op == Op::Const && ex->val == std::round(ex->val) && std::fabs(ex->val) <= 64)
        return powi(base, static_cast<int>(ex->val));
      return mk(Op::Pow, base, ex);
    }
    return base;
  }
  NodePtr primary() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end");
    char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr e = expr();
      if (!eat(')')) fail("expected ')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      size_t used = 0;
      double v = std::stod(s_.substr(pos_), &used);
      pos_ += used;
      return cst(v);
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t b = pos_;
      while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
      std::string id = s_.substr(b, pos_ - b);
      for (size_t i = 0; i < vars_.size(); ++i)
        if (vars_[i] == id) {
          auto n = std::make_shared<Node>();
          n->op = Op::Var;
          n->var = static_cast<int>(i);
          return n;
        }
      if (id == "pi") return cst(M_PI);
      static const std::pair<const char*, Op> funcs[] = {
          {"sin", Op::Sin}, {"cos", Op::Cos}, {"tan", Op::Tan}, {"exp", Op::Exp},
          {"log", Op::Log}, {"sqrt", Op::Sqrt}, {"tanh", Op::Tanh}, {"atan", Op::Atan}};
      for (const auto& [name, op] : funcs)
        if (id == name) {
          if (!eat('(')) fail("expected '(' after " + id);
          NodePtr a = expr();
          if (!eat(')')) fail("expected ')'");
          return fn(op, a);
        }
      fail("unknown identifier '" + id + "'");
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  const std::string& s_;
  const std::vector<std::string>& vars_;
  size_t pos_ = 0;
};

} // namespace

Expr::NodePtr Expr::constant_node(double c) { return cst(c); }

Expr Expr::parse(const std::string& text, const std::vector<std::string>& vars) {
  return Expr(Parser(text, vars).run());
}

bool Expr::depends(const NodePtr& n, int var) {
  if (!n) return false;
  if (n->op == Op::Var) return n->var == var;
  return depends(n->a, var) || depends(n->b, var);
}

Expr::NodePtr Expr::diff(const NodePtr& n, int var) {
  if (!depends(n, var)) return cst(0);
  const NodePtr& a = n->a;
  const NodePtr& b = n->b;
  switch (n->op) {
    case Op::Const: return cst(0);
    case Op::Var: return cst(n->var == var ? 1.0 : 0.0);
    case Op::Add: return add(diff(a, var), diff(b, var));
    case Op::Sub: return sub(diff(a, var), diff(b, var));
    case Op::Mul: return add(mul(diff(a, var), b), mul(a, diff(b, var)));
    case Op::Div: return dvd(sub(mul(diff(a, var), b), mul(a, diff(b, var))), powi(b, 2));
    case Op::Neg: return neg(diff(a, var));
    case Op::PowInt: return mul(mul(cst(n->ipow), powi(a, n->ipow - 1)), diff(a, var));
    case Op::Pow:  // d(a^b) = a^b (b' log a + b a'/a)
      return mul(n, add(mul(diff(b, var), fn(Op::Log, a)), dvd(mul(b, diff(a, var)), a)));
    case Op::Sin: return mul(fn(Op::Cos, a), diff(a, var));
    case Op::Cos: return neg(mul(fn(Op::Sin, a), diff(a, var)));
    case Op::Tan: return mul(add(cst(1), powi(fn(Op::Tan, a), 2)), diff(a, var));
    case Op::Exp: return mul(n, diff(a, var));
    case Op::Log: return dvd(diff(a, var), a);
    case Op::Sqrt: return dvd(diff(a, var), mul(cst(2), n));
    case Op::Tanh: return mul(sub(cst(1), powi(n, 2)), diff(a, var));
    case Op::Atan: return dvd(diff(a, var), add(cst(1), powi(a, 2)));
  }
  return cst(0);
}

std::string Expr::to_string(const NodePtr& n) {
  std::ostringstream os;
  os.precision(17);
  switch (n->op) {
    case Op::Const: os << n->val; break;
    case Op::Var: os << "v" << n->var; break;
    case Op::Add: os << "(" << to_string(n->a) << " + " << to_string(n->b) << ")"; break;
    case Op::Sub: os << "(" << to_string(n->a) << " - " << to_string(n->b) << ")"; break;
    case Op::Mul: os << "(" << to_string(n->a) << " * " << to_string(n->b) << ")"; break;
    case Op::Div: os << "(" << to_string(n->a) << " / " << to_string(n->b) << ")"; break;
    case Op::Neg: os << "(-" << to_string(n->a) << ")"; break;
    case Op::PowInt: os << "(" << to_string(n->a) << ")^" << n->ipow; break;
    case Op::Pow: os << "(" << to_string(n->a) << ")^(" << to_string(n->b) << ")"; break;
    case Op::Sin: os << "sin(" << to_string(n->a) << ")"; break;
    case Op::Cos: os << "cos(" << to_string(n->a) << ")"; break;
    case Op::Tan: os << "tan(" << to_string(n->a) << ")"; break;
    case Op::Exp: os << "exp(" << to_string(n->a) << ")"; break;
    case Op::Log: os << "log(" << to_string(n->a) << ")"; break;
    case Op::Sqrt: os << "sqrt(" << to_string(n->a) << ")"; break;
    case Op::Tanh: os << "tanh(" << to_string(n->a) << ")"; break;
    case Op::Atan: os << "atan(" << to_string(n->a) << ")"; break;
  }
  return os.str();
}

} // namespace beamlab
