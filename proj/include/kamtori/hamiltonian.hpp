#pragma once

// d-parametric families of Hamiltonians H(x, lambda) on T^n x R^n (lifted to
// R^{2n}), x = (q_1..q_n, p_1..p_n), with the derivatives the torus solver
// consumes.

#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "kamtori/separable.hpp"

namespace kam {

/// Standard symplectic matrix J = (0 I; -I 0) of size 2n.
Eigen::MatrixXd symplectic_J(int n);

/// Box in R^k; infinite bounds allowed.
struct Box {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  static Box unbounded(int dim);
  bool contains(const Eigen::VectorXd& x) const;
};

/// Parameter set Q (closed max-norm ball around the center) inside the rectangle A(Q).
struct ParameterDomain {
  Eigen::VectorXd center;
  double radius = std::numeric_limits<double>::infinity();
  Box rectangle;

  static ParameterDomain unbounded(int dim);
  static ParameterDomain ball(const Eigen::VectorXd& center, double radius);
  bool contains(const Eigen::VectorXd& lambda) const;
  /// True when Q holds the closed ball of the given radius around its center.
  bool contains_ball(double r) const { return radius >= r; }
};

class HamiltonianFamily {
 public:
  using ValueFn = std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)>;
  using VectorFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)>;
  using MatrixFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&, const Eigen::VectorXd&)>;

  struct Evaluators {
    ValueFn value;
    VectorFn grad_x;          ///< optional; central differences when empty
    MatrixFn hess_x;          ///< optional
    MatrixFn dgrad_dlambda;   ///< optional, 2n x d
  };

  HamiltonianFamily(std::string name, int n, int param_dim, Evaluators evaluators,
                    std::optional<int> smoothness_class = std::nullopt);

  /// Family whose value is a separable function on the 2n + d axes (x, lambda).
  static HamiltonianFamily from_separable(std::string name, int n, int param_dim,
                                          std::shared_ptr<const SeparableFunction> f,
                                          std::optional<int> smoothness_class = std::nullopt);

  const std::string& name() const { return name_; }
  int n() const { return n_; }
  int phase_dim() const { return 2 * n_; }
  int param_dim() const { return param_dim_; }
  /// nullopt means real analytic.
  std::optional<int> smoothness_class() const { return smoothness_; }
  bool is_analytic() const { return !smoothness_.has_value(); }
  bool has_analytic_derivatives() const { return analytic_derivatives_; }

  const Box& phase_domain() const { return phase_domain_; }
  const ParameterDomain& parameter_domain() const { return param_domain_; }
  HamiltonianFamily with_domains(Box phase, ParameterDomain params) const;

  /// Separable description on the axes (x, lambda), when known.
  const std::shared_ptr<const SeparableFunction>& separable() const { return separable_; }

  double value(const Eigen::VectorXd& x, const Eigen::VectorXd& lambda) const;
  Eigen::VectorXd grad_x(const Eigen::VectorXd& x, const Eigen::VectorXd& lambda) const;
  Eigen::MatrixXd hess_x(const Eigen::VectorXd& x, const Eigen::VectorXd& lambda) const;
  Eigen::MatrixXd dgrad_dlambda(const Eigen::VectorXd& x, const Eigen::VectorXd& lambda) const;

  /// Throws DomainViolation when x or lambda leaves the declared domains.
  void check_domain(const Eigen::VectorXd& x, const Eigen::VectorXd& lambda) const;

 private:
  std::string name_;
  int n_;
  int param_dim_;
  Evaluators eval_;
  std::optional<int> smoothness_;
  bool analytic_derivatives_ = false;
  Box phase_domain_;
  ParameterDomain param_domain_;
  std::shared_ptr<const SeparableFunction> separable_;
};

/// J grad_x H(x, lambda).
Eigen::VectorXd vector_field(const HamiltonianFamily& H, const Eigen::VectorXd& x, const Eigen::VectorXd& lambda);

/// d/dlambda grad_x H(x, lambda), 2n x d.
Eigen::MatrixXd param_coupling(const HamiltonianFamily& H, const Eigen::VectorXd& x, const Eigen::VectorXd& lambda);

enum class Coupling {
  Translation,  ///< + a.p - b.q : the vector field is shifted by lambda
  Sine,         ///< + a.p + sum_j b_j sin(2 pi q_j)
  None,         ///< lambda-independent
};

struct FamilyOptions {
  double epsilon = 0.0;
  int smoothness = 4;       ///< l for finite_smoothness
  int harmonics = 4096;     ///< cutoff of the finite_smoothness series
  Coupling coupling = Coupling::Translation;
};

/// rotator | forced_rotator | pendulum_family | finite_smoothness. Parameters lambda = (a, b) in R^{2n}.
HamiltonianFamily builtin_family(const std::string& name, int n, const FamilyOptions& options = {});

Coupling parse_coupling(const std::string& name);

/// g(q) = sum_{h=1}^{H} h^{-(l + 1.5)} cos(2 pi h q): C^l but not C^{l+1} as H grows.
class RoughSeries {
 public:
  RoughSeries(int smoothness, int harmonics);
  Jet jet(long double q) const;
  int smoothness() const { return l_; }
  int harmonics() const { return harmonics_; }

 private:
  int l_;
  int harmonics_;
  std::vector<long double> amplitude_;
};

}  // namespace kam
