#include "kamtori/separable.hpp"

#include <utility>

#include "kamtori/errors.hpp"

namespace kam {

namespace {

class CallableUnivariate final : public Univariate {
 public:
  explicit CallableUnivariate(std::function<Jet(long double)> fn) : fn_(std::move(fn)) {}
  Jet jet(long double x) const override { return fn_(x); }

 private:
  std::function<Jet(long double)> fn_;
};

class PolynomialUnivariate final : public Univariate {
 public:
  explicit PolynomialUnivariate(std::vector<long double> c) : c_(std::move(c)) {}
  Jet jet(long double x) const override {
    // Horner on the jet.
    Jet acc = Jet::constant(0.0L);
    const Jet var = Jet::variable(x);
    for (auto it = c_.rbegin(); it != c_.rend(); ++it) acc = acc * var + *it;
    return acc;
  }
  int polynomial_degree() const override { return static_cast<int>(c_.size()) - 1; }

 private:
  std::vector<long double> c_;
};

}  // namespace

UnivariatePtr make_univariate(std::function<Jet(long double)> fn) {
  return std::make_shared<CallableUnivariate>(std::move(fn));
}

UnivariatePtr univariate_identity() { return univariate_polynomial({0.0L, 1.0L}); }

UnivariatePtr univariate_polynomial(std::vector<long double> coeffs) {
  return std::make_shared<PolynomialUnivariate>(std::move(coeffs));
}

UnivariatePtr univariate_product(UnivariatePtr f, UnivariatePtr g) {
  return make_univariate([f = std::move(f), g = std::move(g)](long double x) { return f->jet(x) * g->jet(x); });
}

SeparableFunction& SeparableFunction::add_term(double coefficient,
                                               std::vector<std::pair<int, UnivariatePtr>> factors) {
  Term term{coefficient, std::vector<UnivariatePtr>(static_cast<std::size_t>(dim_))};
  for (auto& [axis, f] : factors) {
    if (axis < 0 || axis >= dim_) throw Error(ErrorKind::InvalidArgument, "separable term axis out of range");
    auto& slot = term.factors[static_cast<std::size_t>(axis)];
    slot = slot ? univariate_product(slot, f) : f;
  }
  terms_.push_back(std::move(term));
  return *this;
}

SeparableFunction& SeparableFunction::add_term(Term term) {
  if (static_cast<int>(term.factors.size()) != dim_)
    throw Error(ErrorKind::InvalidArgument, "separable term has wrong arity");
  terms_.push_back(std::move(term));
  return *this;
}

SeparableFunction SeparableFunction::map_factors(
    const std::function<UnivariatePtr(int, const UnivariatePtr&)>& transform, bool include_constants) const {
  SeparableFunction out(dim_);
  for (const auto& term : terms_) {
    Term t{term.coefficient, term.factors};
    for (int i = 0; i < dim_; ++i) {
      auto& f = t.factors[static_cast<std::size_t>(i)];
      if (f || include_constants) f = transform(i, f);
    }
    out.terms_.push_back(std::move(t));
  }
  return out;
}

SeparableFunction SeparableFunction::multiplied_by(int axis, const UnivariatePtr& g) const {
  SeparableFunction out(dim_);
  for (const auto& term : terms_) {
    Term t{term.coefficient, term.factors};
    auto& slot = t.factors[static_cast<std::size_t>(axis)];
    slot = slot ? univariate_product(slot, g) : g;
    out.terms_.push_back(std::move(t));
  }
  return out;
}

std::vector<std::vector<Jet>> SeparableFunction::jets(const Eigen::VectorXd& x) const {
  std::vector<std::vector<Jet>> out(terms_.size());
  for (std::size_t t = 0; t < terms_.size(); ++t) {
    out[t].resize(static_cast<std::size_t>(dim_));
    for (int i = 0; i < dim_; ++i) {
      const auto& f = terms_[t].factors[static_cast<std::size_t>(i)];
      out[t][static_cast<std::size_t>(i)] = f ? f->jet(x(i)) : Jet::constant(1.0L);
    }
  }
  return out;
}

double SeparableFunction::value(const Eigen::VectorXd& x) const {
  return partial(x, std::vector<int>(static_cast<std::size_t>(dim_), 0));
}

double SeparableFunction::partial(const Eigen::VectorXd& x, const std::vector<int>& alpha) const {
  long double sum = 0.0L;
  for (const auto& term : terms_) {
    long double prod = term.coefficient;
    for (int i = 0; i < dim_ && prod != 0.0L; ++i) {
      const auto& f = term.factors[static_cast<std::size_t>(i)];
      const int a = alpha[static_cast<std::size_t>(i)];
      if (!f) {
        if (a > 0) prod = 0.0L;
        continue;
      }
      prod *= f->jet(x(i))[a];
    }
    sum += prod;
  }
  return static_cast<double>(sum);
}

Eigen::VectorXd SeparableFunction::gradient(const Eigen::VectorXd& x) const {
  const auto J = jets(x);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(dim_);
  for (std::size_t t = 0; t < terms_.size(); ++t)
    for (int i = 0; i < dim_; ++i) {
      long double prod = terms_[t].coefficient;
      for (int j = 0; j < dim_; ++j) prod *= J[t][static_cast<std::size_t>(j)][j == i ? 1 : 0];
      g(i) += static_cast<double>(prod);
    }
  return g;
}

Eigen::MatrixXd SeparableFunction::hessian(const Eigen::VectorXd& x) const {
  const auto J = jets(x);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim_, dim_);
  for (std::size_t t = 0; t < terms_.size(); ++t)
    for (int a = 0; a < dim_; ++a)
      for (int b = a; b < dim_; ++b) {
        long double prod = terms_[t].coefficient;
        for (int j = 0; j < dim_; ++j) {
          const int order = (j == a) + (j == b);
          prod *= J[t][static_cast<std::size_t>(j)][order];
        }
        h(a, b) += static_cast<double>(prod);
      }
  for (int a = 0; a < dim_; ++a)
    for (int b = 0; b < a; ++b) h(a, b) = h(b, a);
  return h;
}

SeparableFunction operator-(const SeparableFunction& a, const SeparableFunction& b) {
  if (a.dim() != b.dim()) throw Error(ErrorKind::InvalidArgument, "separable dimension mismatch");
  SeparableFunction out(a.dim());
  for (const auto& t : a.terms()) out.add_term(t);
  for (auto t : b.terms()) {
    t.coefficient = -t.coefficient;
    out.add_term(std::move(t));
  }
  return out;
}

std::vector<std::vector<int>> multi_indices_up_to(int dim, int order) {
  std::vector<std::vector<int>> out;
  std::vector<int> alpha(static_cast<std::size_t>(dim), 0);
  std::function<void(int, int)> rec = [&](int axis, int remaining) {
    if (axis == dim) {
      out.push_back(alpha);
      return;
    }
    for (int a = 0; a <= remaining; ++a) {
      alpha[static_cast<std::size_t>(axis)] = a;
      rec(axis + 1, remaining - a);
    }
    alpha[static_cast<std::size_t>(axis)] = 0;
  };
  rec(0, order);
  return out;
}

}  // namespace kam
