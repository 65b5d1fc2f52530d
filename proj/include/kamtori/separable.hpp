#pragma once

// Functions on R^D written as finite sums of products of univariate factors,
// f(x) = sum_t c_t prod_i f_{t,i}(x_i). Mixed partials factorize axis by axis,
// so every derivative up to order 3 per axis is exact.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kamtori/jet.hpp"

namespace kam {

class Univariate {
 public:
  virtual ~Univariate() = default;
  virtual Jet jet(long double x) const = 0;
  long double operator()(long double x) const { return jet(x).value(); }
  /// Degree when the factor is a known polynomial, -1 otherwise.
  virtual int polynomial_degree() const { return -1; }
};

using UnivariatePtr = std::shared_ptr<const Univariate>;

/// Wraps a callable long double -> Jet.
UnivariatePtr make_univariate(std::function<Jet(long double)> fn);
/// Wraps a callable templated on the scalar: fn(Jet) -> Jet.
template <class F>
UnivariatePtr univariate_from_jet_expression(F fn) {
  return make_univariate([fn](long double x) { return fn(Jet::variable(x)); });
}
UnivariatePtr univariate_identity();
/// sum_j coeffs[j] x^j
UnivariatePtr univariate_polynomial(std::vector<long double> coeffs);
/// x -> f(x) g(x)
UnivariatePtr univariate_product(UnivariatePtr f, UnivariatePtr g);

class SeparableFunction {
 public:
  struct Term {
    double coefficient = 1.0;
    std::vector<UnivariatePtr> factors;  ///< one per axis; nullptr means the constant 1
  };

  explicit SeparableFunction(int dim) : dim_(dim) {}

  int dim() const { return dim_; }
  const std::vector<Term>& terms() const { return terms_; }

  /// Adds c * prod of the given (axis, factor) pairs.
  SeparableFunction& add_term(double coefficient, std::vector<std::pair<int, UnivariatePtr>> factors);
  SeparableFunction& add_term(Term term);

  /// Applies `transform` to every non-constant factor and to constant factors on
  /// the listed axes (which receive univariate constants first).
  SeparableFunction map_factors(const std::function<UnivariatePtr(int axis, const UnivariatePtr&)>& transform,
                                bool include_constants = false) const;

  /// Multiplies every term by g(x_axis).
  SeparableFunction multiplied_by(int axis, const UnivariatePtr& g) const;

  double value(const Eigen::VectorXd& x) const;
  /// Mixed partial derivative with per-axis orders alpha_i <= 3.
  double partial(const Eigen::VectorXd& x, const std::vector<int>& alpha) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd hessian(const Eigen::VectorXd& x) const;

  /// Per-term, per-axis jets at x; entry [t][i] (constant factors give Jet::constant(1)).
  std::vector<std::vector<Jet>> jets(const Eigen::VectorXd& x) const;

 private:
  int dim_;
  std::vector<Term> terms_;
};

SeparableFunction operator-(const SeparableFunction& a, const SeparableFunction& b);

/// All multi-indices alpha in N^dim with |alpha| <= order.
std::vector<std::vector<int>> multi_indices_up_to(int dim, int order);

}  // namespace kam
