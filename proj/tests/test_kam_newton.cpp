#include <cmath>

#include "doctest.h"
#include "kamtori/errors.hpp"
#include "kamtori/kam_newton.hpp"
#include "test_support.hpp"

using namespace kam;
using kam::testing::kTwoPi;

namespace {

const double kOmega1 = 0.5 * (std::sqrt(5.0) - 1.0);

FrequencyVector golden1() { return make_frequency(Eigen::VectorXd::Constant(1, kOmega1), 0.0, 0.75, 1000); }

FrequencyVector golden2() {
  Eigen::VectorXd w(2);
  w << 1.0, kOmega1;
  return make_frequency(w, 0.0, 1.5, 1000);
}

HamiltonianFamily forced(int n, double eps) {
  FamilyOptions o;
  o.epsilon = eps;
  return builtin_family("forced_rotator", n, o);
}

double loglog_slope(const std::vector<double>& r) {
  // Least-squares slope of log r_{m+1} against log r_m.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double k = static_cast<double>(r.size() - 1);
  for (std::size_t i = 0; i + 1 < r.size(); ++i) {
    const double x = std::log(r[i]), y = std::log(r[i + 1]);
    sx += x, sy += y, sxx += x * x, sxy += x * y;
  }
  return (k * sxy - sx * sy) / (k * sxx - sx * sx);
}

}  // namespace

TEST_CASE("budget arithmetic") {
  const KamBudget b = make_budget(24.0, 0.1, 1.0, 2.0, 1.0);
  CHECK(b.delta0 == 1.0);
  CHECK(b.beta_step == 0.00390625);
  CHECK(b.beta_total == 1.0 / 224.0);
  CHECK(make_budget(0.6, 0.1, 1.0, 2.0, 1.0).delta0 == 0.6 / 12.0);
  for (double s : {1.1, 1.5, 3.0}) {
    const KamBudget c = make_budget(0.3, 0.1, 0.2, s, 1.0);
    CHECK(c.beta_total > c.beta_step);
    CHECK(c.beta_step > 0.0);
  }
  CHECK_THROWS_AS(make_budget(0.0, 0.1, 1.0, 2.0, 1.0), Error);
}

TEST_CASE("smallness ledger") {
  const KamBudget b = make_budget(12.0, 0.1, 1.0, 2.0, 1.0);
  const SmallnessLedger l = check_smallness(b, 0.5);
  CHECK(l.lhs_newton == 0.5);
  CHECK(l.lhs_drift == 0.5);
  CHECK(l.newton_ok);
  CHECK_FALSE(l.drift_ok);
  CHECK(l.margin_drift == doctest::Approx(-0.4));
  const SmallnessLedger z = check_smallness(b, 0.0);
  CHECK(z.passed());
  CHECK(z.margin_newton == 1.0);
  CHECK(z.margin_drift == 0.1);
}

TEST_CASE("error function") {
  const auto w = Eigen::VectorXd::Constant(1, kOmega1);
  const auto K = TorusEmbedding::flat(1, 16, w);
  const auto rot = builtin_family("rotator", 1);
  CHECK(strip_norm(error_function(rot, Eigen::VectorXd::Zero(2), K, w), 0.1).value < 1e-14);

  // H = p^2/2 + eps sin(2 pi q): e = (0, -2 pi eps cos(2 pi theta)) on the flat torus.
  const double eps = 0.01;
  const FourierMap e = error_function(forced(1, eps), Eigen::VectorXd::Zero(2), K, w);
  const int k1[] = {1}, k2[] = {2};
  CHECK(std::abs(e.coeff(k1, 0)) < 1e-15);
  CHECK(std::abs(e.coeff(k1, 1) - Complex(-M_PI * eps, 0.0)) < 1e-15);
  CHECK(std::abs(e.coeff(k2, 1)) < 1e-15);
  // A nonzero parameter shifts the field: lambda = (a, b) adds (a, b).
  Eigen::VectorXd l(2);
  l << 0.3, -0.2;
  const Eigen::VectorXd avg = average(error_function(rot, l, K, w));
  CHECK(avg(0) == doctest::Approx(0.3));
  CHECK(avg(1) == doctest::Approx(-0.2));
}

TEST_CASE("newton step fixed point and singular coupling") {
  const auto f = golden1();
  const auto K = TorusEmbedding::flat(1, 16, f.omega);
  const auto rot = builtin_family("rotator", 1);
  const NewtonResult r = newton_step(rot, Eigen::VectorXd::Zero(2), K, f, 0.1, 0.075);
  CHECK(r.lambda.cwiseAbs().maxCoeff() < 1e-12);
  CHECK(strip_norm(r.K.periodic - K.periodic, 0.1).value < 1e-12);

  FamilyOptions o;
  o.epsilon = 1e-3;
  o.coupling = Coupling::Sine;
  try {
    newton_step(builtin_family("forced_rotator", 1, o), Eigen::VectorXd::Zero(2), K, f, 0.1, 0.075);
    FAIL("expected SingularLambdaAverage");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SingularLambdaAverage);
  }
}

TEST_CASE("forced rotator n = 1: quadratic convergence and conclusion audit") {
  const auto f = golden1();
  const auto H = forced(1, 1e-3);
  const auto K0 = TorusEmbedding::flat(1, 32, f.omega);
  const Eigen::VectorXd l0 = Eigen::VectorXd::Zero(2);

  const NewtonResult one = newton_step(H, l0, K0, f, 0.1, 0.075);
  CHECK(one.report.e_in / one.report.e_out >= 500.0);
  CHECK(one.report.rhs_average_bottom < 1e-12);
  CHECK(one.report.rhs_average_top < 1e-12);

  const KamBudget b = make_budget(0.1, 0.05, f.gamma, f.sigma, 1.0);
  const TorusSolution sol = solve_analytic(H, l0, K0, f, b);
  CHECK(sol.iterations() <= 10);
  CHECK(sol.residual.value < 1e-10);
  CHECK(sol.rho_final == 0.05);
  std::vector<double> res{sol.history.front().e_in};
  for (const auto& s : sol.history) res.push_back(s.e_out);
  REQUIRE(res.size() >= 3);
  const double slope = loglog_slope({res.end() - 3, res.end()});
  CHECK(slope == doctest::Approx(2.0).epsilon(0.1));

  // Residual recomputed from scratch.
  const double again = strip_norm(error_function(H, sol.lambda, sol.K, f.omega), sol.rho_final).value;
  CHECK(std::abs(again - sol.residual.value) < 1e-12);
  const DriftAudit a = audit_solution(H, sol, l0, K0, b);
  CHECK(a.passed());
  CHECK(a.lambda_drift < b.r);
  CHECK(a.K_drift <= b.r);
  CHECK(calibrate_c(sol.history) > 0.0);
}

TEST_CASE("forced rotator n = 2 converges; the beta audit flags the tiny budget") {
  const auto f = golden2();
  const auto H = forced(2, 1e-3);
  const auto K0 = TorusEmbedding::flat(2, 12, f.omega);
  const KamBudget b = make_budget(0.1, 0.05, f.gamma, f.sigma, 1.0);
  SolveOptions o;
  o.enforce_drift = false;
  const TorusSolution sol = solve_analytic(H, Eigen::VectorXd::Zero(4), K0, f, b, o);
  CHECK(sol.residual.value < 1e-10);
  CHECK(sol.audit.K_ok);
  CHECK(sol.audit.lambda_ok);
  CHECK_FALSE(sol.audit.d_ok);
  try {
    solve_analytic(H, Eigen::VectorXd::Zero(4), K0, f, b);
    FAIL("expected DriftViolation");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DriftViolation);
  }
}

TEST_CASE("iteration budget and strip schedule") {
  CHECK(analytic_strip(0.2, 0) == 0.2);
  CHECK(analytic_strip(0.2, 1) == doctest::Approx(0.15).epsilon(1e-15));
  CHECK(analytic_strip(0.2, 40) == doctest::Approx(0.1));
  const auto f = golden1();
  SolveOptions o;
  o.max_iterations = 1;
  try {
    solve_analytic(forced(1, 1e-3), Eigen::VectorXd::Zero(2), TorusEmbedding::flat(1, 32, f.omega), f,
                   make_budget(0.1, 0.05, f.gamma, f.sigma, 1.0), o);
    FAIL("expected BudgetExceeded");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::BudgetExceeded);
  }
  const TorusSolution same = solve_analytic(builtin_family("rotator", 1), Eigen::VectorXd::Zero(2),
                                            TorusEmbedding::flat(1, 8, f.omega), f,
                                            make_budget(0.1, 0.05, f.gamma, f.sigma, 1.0));
  CHECK(same.iterations() == 0);
  CHECK(same.residual.value < 1e-14);
  CHECK(strip_norm(same.K.periodic - TorusEmbedding::flat(1, 8, f.omega).periodic, 0.1).value == 0.0);
}
