#pragma once

// Small closed-form expression language for metric and potential coefficients.
// Grammar: + - * / ^, unary minus, numbers, pi, named variables and the
// functions sin cos tan exp log sqrt tanh atan. Evaluation is generic over
// double, binary128 and Jet types; derivatives are symbolic.

#include "beamlab/jet.hpp"

#include <memory>
#include <string>
#include <vector>

namespace beamlab {

class Expr {
public:
  enum class Op { Const, Var, Add, Sub, Mul, Div, Neg, PowInt, Pow, Sin, Cos, Tan, Exp, Log, Sqrt, Tanh, Atan };
  struct Node {
    Op op = Op::Const;
    double val = 0.0;
    int var = -1;
    int ipow = 0;
    std::shared_ptr<const Node> a, b;
  };
  using NodePtr = std::shared_ptr<const Node>;

  Expr() : root_(constant_node(0.0)) {}
  explicit Expr(double c) : root_(constant_node(c)) {}

  /// Throws Error("config", ...) on syntax errors or unknown identifiers.
  static Expr parse(const std::string& text, const std::vector<std::string>& vars);

  Expr derivative(int var) const { return Expr(diff(root_, var)); }
  bool is_constant() const { return root_->op == Op::Const; }
  double constant_value() const { return root_->val; }
  bool depends_on(int var) const { return depends(root_, var); }
  std::string str() const { return to_string(root_); }

  template <class T> T eval(const T* v) const { return eval_node<T>(*root_, v); }

private:
  explicit Expr(NodePtr r) : root_(std::move(r)) {}
  static NodePtr constant_node(double c);
  static NodePtr diff(const NodePtr& n, int var);
  static bool depends(const NodePtr& n, int var);
  static std::string to_string(const NodePtr& n);

  template <class T> static T eval_node(const Node& n, const T* v) {
    switch (n.op) {
      case Op::Const: return konst_like(v[0], n.val);
      case Op::Var: return v[n.var];
      case Op::Add: return eval_node<T>(*n.a, v) + eval_node<T>(*n.b, v);
      case Op::Sub: return eval_node<T>(*n.a, v) - eval_node<T>(*n.b, v);
      case Op::Mul: {
        if (n.a->op == Op::Const) return scale_by(eval_node<T>(*n.b, v), n.a->val);
        return eval_node<T>(*n.a, v) * eval_node<T>(*n.b, v);
      }
      case Op::Div: {
        if (n.b->op == Op::Const) return scale_by(eval_node<T>(*n.a, v), 1.0 / n.b->val);
        return eval_node<T>(*n.a, v) / eval_node<T>(*n.b, v);
      }
      case Op::Neg: return -eval_node<T>(*n.a, v);
      case Op::PowInt: {
        T base = eval_node<T>(*n.a, v);
        int p = n.ipow < 0 ? -n.ipow : n.ipow;
        T acc = konst_like(v[0], 1.0);
        T sq = base;
        while (p) {
          if (p & 1) acc = acc * sq;
          p >>= 1;
          if (p) sq = sq * sq;
        }
        if (n.ipow < 0) return konst_like(v[0], 1.0) / acc;
        return acc;
      }
      case Op::Pow: return exp(eval_node<T>(*n.b, v) * log(eval_node<T>(*n.a, v)));
      case Op::Sin: return sin(eval_node<T>(*n.a, v));
      case Op::Cos: return cos(eval_node<T>(*n.a, v));
      case Op::Tan: return tan(eval_node<T>(*n.a, v));
      case Op::Exp: return exp(eval_node<T>(*n.a, v));
      case Op::Log: return log(eval_node<T>(*n.a, v));
      case Op::Sqrt: return sqrt(eval_node<T>(*n.a, v));
      case Op::Tanh: return tanh(eval_node<T>(*n.a, v));
      case Op::Atan: return atan(eval_node<T>(*n.a, v));
    }
    return konst_like(v[0], 0.0);
  }

  NodePtr root_;
};

} // namespace beamlab
