#pragma once

// Tiny expression language for Hamiltonian families: sums, products, powers
// and elementary functions of q_i, p_i and the parameters, differentiated
// symbolically.

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kamtori/hamiltonian.hpp"

namespace kam {

class Expr;
using ExprPtr = std::shared_ptr<const Expr>;

class Expr {
 public:
  enum class Op { Const, Var, Add, Sub, Mul, Div, Neg, Pow, Sin, Cos, Exp, Log, Sqrt };

  Op op() const { return op_; }
  double constant() const { return value_; }
  int variable() const { return var_; }
  const ExprPtr& lhs() const { return a_; }
  const ExprPtr& rhs() const { return b_; }

  double eval(const Eigen::VectorXd& z) const;
  /// Symbolic partial derivative with respect to variable `var`.
  ExprPtr diff(int var) const;
  std::string to_string(const std::vector<std::string>& names) const;

  static ExprPtr make_const(double v);
  static ExprPtr make_var(int v);
  static ExprPtr make(Op op, ExprPtr a, ExprPtr b = nullptr);

 private:
  Expr(Op op, double v, int var, ExprPtr a, ExprPtr b) : op_(op), value_(v), var_(var), a_(std::move(a)), b_(std::move(b)) {}
  Op op_;
  double value_ = 0.0;
  int var_ = -1;
  ExprPtr a_, b_;
};

/// Variable names for phase dimension n and d parameters: q1..qn, p1..pn, then
/// a1..an, b1..bn when d = 2n, else l1..ld. For n = 1, q, p, a, b also work.
std::vector<std::string> expression_variable_names(int n, int d);

/// Parses `text`; throws ParseError with the offending column.
ExprPtr parse_expression(const std::string& text, int n, int d);

/// Family with value, gradient, Hessian and parameter coupling from the symbolic tree.
HamiltonianFamily expression_family(const std::string& text, int n, int d, const std::string& name = "expression");

}  // namespace kam
