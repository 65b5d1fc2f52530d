#include "kamtori/hamiltonian.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <utility>

#include "kamtori/errors.hpp"

namespace kam {

namespace {

constexpr long double kTwoPiL = 2.0L * std::numbers::pi_v<long double>;

double fd_step(double x) { return std::cbrt(std::numeric_limits<double>::epsilon()) * std::max(1.0, std::abs(x)); }

UnivariatePtr sin_factor(long double freq) {
  return univariate_from_jet_expression([freq](const Jet& x) { return sin(freq * x); });
}
UnivariatePtr cos_factor(long double freq) {
  return univariate_from_jet_expression([freq](const Jet& x) { return cos(freq * x); });
}

}  // namespace

Eigen::MatrixXd symplectic_J(int n) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  J.topRightCorner(n, n) = Eigen::MatrixXd::Identity(n, n);
  J.bottomLeftCorner(n, n) = -Eigen::MatrixXd::Identity(n, n);
  return J;
}

Box Box::unbounded(int dim) {
  const double inf = std::numeric_limits<double>::infinity();
  return {Eigen::VectorXd::Constant(dim, -inf), Eigen::VectorXd::Constant(dim, inf)};
}

bool Box::contains(const Eigen::VectorXd& x) const {
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (!(x(i) >= lower(i) && x(i) <= upper(i))) return false;
  return true;
}

ParameterDomain ParameterDomain::unbounded(int dim) {
  return {Eigen::VectorXd::Zero(dim), std::numeric_limits<double>::infinity(), Box::unbounded(dim)};
}

ParameterDomain ParameterDomain::ball(const Eigen::VectorXd& center, double radius) {
  ParameterDomain d{center, radius, Box{center.array() - radius, center.array() + radius}};
  return d;
}

bool ParameterDomain::contains(const Eigen::VectorXd& lambda) const {
  if (!rectangle.contains(lambda)) return false;
  if (std::isinf(radius)) return true;
  return (lambda - center).cwiseAbs().maxCoeff() <= radius;
}

// ---------------------------------------------------------------- family

HamiltonianFamily::HamiltonianFamily(std::string name, int n, int param_dim, Evaluators evaluators,
                                     std::optional<int> smoothness_class)
    : name_(std::move(name)),
      n_(n),
      param_dim_(param_dim),
      eval_(std::move(evaluators)),
      smoothness_(smoothness_class),
      phase_domain_(Box::unbounded(2 * n)),
      param_domain_(ParameterDomain::unbounded(param_dim)) {
  if (!eval_.value) throw Error(ErrorKind::InvalidArgument, "family needs a value evaluator");
  analytic_derivatives_ = eval_.grad_x && eval_.hess_x && eval_.dgrad_dlambda;
}

HamiltonianFamily HamiltonianFamily::from_separable(std::string name, int n, int param_dim,
                                                    std::shared_ptr<const SeparableFunction> f,
                                                    std::optional<int> smoothness_class) {
  if (f->dim() != 2 * n + param_dim) throw Error(ErrorKind::InvalidArgument, "separable arity mismatch");
  const int px = 2 * n;
  auto join = [px, param_dim](const Eigen::VectorXd& x, const Eigen::VectorXd& l) {
    Eigen::VectorXd z(px + param_dim);
    z << x, l;
    return z;
  };
  Evaluators ev;
  ev.value = [f, join](const Eigen::VectorXd& x, const Eigen::VectorXd& l) { return f->value(join(x, l)); };
  ev.grad_x = [f, join, px](const Eigen::VectorXd& x, const Eigen::VectorXd& l) {
    return Eigen::VectorXd(f->gradient(join(x, l)).head(px));
  };
  ev.hess_x = [f, join, px](const Eigen::VectorXd& x, const Eigen::VectorXd& l) {
    return Eigen::MatrixXd(f->hessian(join(x, l)).topLeftCorner(px, px));
  };
  ev.dgrad_dlambda = [f, join, px, param_dim](const Eigen::VectorXd& x, const Eigen::VectorXd& l) {
    return Eigen::MatrixXd(f->hessian(join(x, l)).topRightCorner(px, param_dim));
  };
  HamiltonianFamily family(std::move(name), n, param_dim, std::move(ev), smoothness_class);
  family.separable_ = std::move(f);
  return family;
}

HamiltonianFamily HamiltonianFamily::with_domains(Box phase, ParameterDomain params) const {
  HamiltonianFamily out = *this;
  out.phase_domain_ = std::move(phase);
  out.param_domain_ = std::move(params);
  return out;
}

void HamiltonianFamily::check_domain(const Eigen::VectorXd& x, const Eigen::VectorXd& lambda) const {
  if (x.size() != phase_dim() || lambda.size() != param_dim_)
    throw Error(ErrorKind::InvalidArgument, "argument dimensions do not match the family");
  if (!phase_domain_.contains(x)) {
    std::ostringstream msg;
    msg << "phase point (" << x.transpose() << ") outside the domain of " << name_;
    throw Error(ErrorKind::DomainViolation, msg.str());
  }
  if (!param_domain_.contains(lambda)) {
    std::ostringstream msg;
    msg << "parameter (" << lambda.transpose() << ") outside Q";
    throw Error(ErrorKind::DomainViolation, msg.str());
  }
}

double HamiltonianFamily::value(const Eigen::VectorXd& x, const Eigen::VectorXd& lambda) const {
  return eval_.value(x, lambda);
}

Eigen::VectorXd HamiltonianFamily::grad_x(const Eigen::VectorXd& x, const Eigen::VectorXd& lambda) const {
  if (eval_.grad_x) return eval_.grad_x(x, lambda);
  Eigen::VectorXd g(phase_dim());
  for (int i = 0; i < phase_dim(); ++i) {
    const double h = fd_step(x(i));
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    g(i) = (eval_.value(xp, lambda) - eval_.value(xm, lambda)) / (2.0 * h);
  }
  return g;
}

Eigen::MatrixXd HamiltonianFamily::hess_x(const Eigen::VectorXd& x, const Eigen::VectorXd& lambda) const {
  if (eval_.hess_x) return eval_.hess_x(x, lambda);
  const int d = phase_dim();
  Eigen::MatrixXd h(d, d);
  if (eval_.grad_x) {
    for (int j = 0; j < d; ++j) {
      const double s = fd_step(x(j));
      Eigen::VectorXd xp = x, xm = x;
      xp(j) += s;
      xm(j) -= s;
      h.col(j) = (eval_.grad_x(xp, lambda) - eval_.grad_x(xm, lambda)) / (2.0 * s);
    }
  } else {
    const double eps4 = std::pow(std::numeric_limits<double>::epsilon(), 0.25);
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) {
        const double si = eps4 * std::max(1.0, std::abs(x(i)));
        const double sj = eps4 * std::max(1.0, std::abs(x(j)));
        auto f = [&](double di, double dj) {
          Eigen::VectorXd y = x;
          y(i) += di;
          y(j) += dj;
          return eval_.value(y, lambda);
        };
        h(i, j) = (f(si, sj) - f(si, -sj) - f(-si, sj) + f(-si, -sj)) / (4.0 * si * sj);
      }
  }
  return 0.5 * (h + h.transpose());
}

Eigen::MatrixXd HamiltonianFamily::dgrad_dlambda(const Eigen::VectorXd& x, const Eigen::VectorXd& lambda) const {
  if (eval_.dgrad_dlambda) return eval_.dgrad_dlambda(x, lambda);
  Eigen::MatrixXd out(phase_dim(), param_dim_);
  for (int j = 0; j < param_dim_; ++j) {
    const double s = fd_step(lambda(j));
    Eigen::VectorXd lp = lambda, lm = lambda;
    lp(j) += s;
    lm(j) -= s;
    out.col(j) = (grad_x(x, lp) - grad_x(x, lm)) / (2.0 * s);
  }
  return out;
}

Eigen::VectorXd vector_field(const HamiltonianFamily& H, const Eigen::VectorXd& x, const Eigen::VectorXd& lambda) {
  H.check_domain(x, lambda);
  const int n = H.n();
  const Eigen::VectorXd g = H.grad_x(x, lambda);
  Eigen::VectorXd v(2 * n);
  v.head(n) = g.tail(n);
  v.tail(n) = -g.head(n);
  return v;
}

Eigen::MatrixXd param_coupling(const HamiltonianFamily& H, const Eigen::VectorXd& x, const Eigen::VectorXd& lambda) {
  H.check_domain(x, lambda);
  return H.dgrad_dlambda(x, lambda);
}

// -------------------------------------------------------------- builtins

RoughSeries::RoughSeries(int smoothness, int harmonics) : l_(smoothness), harmonics_(harmonics) {
  if (harmonics < 1) throw Error(ErrorKind::InvalidArgument, "series needs at least one harmonic");
  amplitude_.resize(static_cast<std::size_t>(harmonics) + 1, 0.0L);
  for (int h = 1; h <= harmonics; ++h)
    amplitude_[static_cast<std::size_t>(h)] = std::pow(static_cast<long double>(h), -(l_ + 1.5L));
}

Jet RoughSeries::jet(long double q) const {
  // Rotate e^{2 pi i h q} by repeated multiplication, re-synchronising periodically.
  long double c0 = 0.0L, s1 = 0.0L, c2 = 0.0L, s3 = 0.0L;
  const long double base = kTwoPiL * q;
  const long double cb = std::cos(base), sb = std::sin(base);
  long double zc = 1.0L, zs = 0.0L;
  for (int h = 1; h <= harmonics_; ++h) {
    if (h % 64 == 0) {
      zc = std::cos(base * h);
      zs = std::sin(base * h);
    } else {
      const long double nc = zc * cb - zs * sb;
      zs = zc * sb + zs * cb;
      zc = nc;
    }
    const long double a = amplitude_[static_cast<std::size_t>(h)];
    const long double w = kTwoPiL * h;
    c0 += a * zc;
    s1 += a * w * zs;
    c2 += a * w * w * zc;
    s3 += a * w * w * w * zs;
  }
  return Jet{{c0, -s1, -c2, s3}};
}

Coupling parse_coupling(const std::string& name) {
  if (name == "translation") return Coupling::Translation;
  if (name == "sine") return Coupling::Sine;
  if (name == "none") return Coupling::None;
  throw Error(ErrorKind::InvalidArgument, "unknown coupling '" + name + "'");
}

HamiltonianFamily builtin_family(const std::string& name, int n, const FamilyOptions& options) {
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "n must be >= 1");
  const int d = 2 * n;
  auto f = std::make_shared<SeparableFunction>(2 * n + d);
  auto q = [](int j) { return j; };
  auto p = [n](int j) { return n + j; };
  auto a = [n](int j) { return 2 * n + j; };
  auto b = [n](int j) { return 3 * n + j; };
  const double eps = options.epsilon;
  const long double w = kTwoPiL;
  std::optional<int> smoothness;

  for (int j = 0; j < n; ++j) f->add_term(1.0, {{p(j), univariate_polynomial({0.0L, 0.0L, 0.5L})}});

  if (name == "rotator") {
    // kinetic term only
  } else if (name == "forced_rotator") {
    for (int j = 0; j < n; ++j) f->add_term(eps, {{q(j), sin_factor(w)}});
    if (n >= 2) {
      // eps sin(2 pi (q1 + q2))
      f->add_term(eps, {{q(0), sin_factor(w)}, {q(1), cos_factor(w)}});
      f->add_term(eps, {{q(0), cos_factor(w)}, {q(1), sin_factor(w)}});
    }
  } else if (name == "pendulum_family") {
    for (int j = 0; j < n; ++j) f->add_term(eps, {{q(j), cos_factor(w)}});
  } else if (name == "finite_smoothness") {
    auto series = std::make_shared<RoughSeries>(options.smoothness, options.harmonics);
    auto g = make_univariate([series](long double x) { return series->jet(x); });
    for (int j = 0; j < n; ++j) f->add_term(eps, {{q(j), g}});
    smoothness = options.smoothness;
  } else {
    throw Error(ErrorKind::UnknownFamily, "'" + name + "'");
  }

  switch (options.coupling) {
    case Coupling::Translation:
      for (int j = 0; j < n; ++j) {
        f->add_term(1.0, {{a(j), univariate_identity()}, {p(j), univariate_identity()}});
        f->add_term(-1.0, {{b(j), univariate_identity()}, {q(j), univariate_identity()}});
      }
      break;
    case Coupling::Sine:
      for (int j = 0; j < n; ++j) {
        f->add_term(1.0, {{a(j), univariate_identity()}, {p(j), univariate_identity()}});
        f->add_term(1.0, {{b(j), univariate_identity()}, {q(j), sin_factor(w)}});
      }
      break;
    case Coupling::None:
      break;
  }
  return HamiltonianFamily::from_separable(name, n, d, std::move(f), smoothness);
}

}  // namespace kam
