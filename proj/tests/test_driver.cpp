#include <algorithm>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "kamtori/driver.hpp"
#include "kamtori/errors.hpp"

using namespace kam;

namespace {

constexpr double kRho = 0.1;
constexpr double kR = 0.05;

FrequencyVector golden() {
  return make_frequency(Eigen::VectorXd::Constant(1, (std::sqrt(5.0) - 1.0) / 2.0), 0.0, 0.75, 1000);
}

TorusEmbedding flat(const FrequencyVector& f) { return TorusEmbedding::flat(1, 16, f.omega); }

Eigen::VectorXd zero2() { return Eigen::VectorXd::Zero(2); }

HamiltonianFamily family(const std::string& name, double eps) {
  FamilyOptions o;
  o.epsilon = eps;
  o.smoothness = 4;
  return builtin_family(name, 1, o);
}

/// H^k = H + eta_k a p: a sequence whose lambda coupling changes from step to step.
ApproximantSequence coupled_sequence(const HamiltonianFamily& H, const Box& box, int levels, double eta0) {
  ApproximantSequence seq;
  seq.k0 = 2;
  seq.exponent = 4.0 + 1.5;
  seq.measurement_box = box;
  std::vector<std::shared_ptr<const SeparableFunction>> fs;
  for (int k = 1; k <= levels; ++k) {
    auto f = std::make_shared<SeparableFunction>(*H.separable());
    f->add_term(eta0 * std::pow(4.0, -seq.exponent * k), {{2, univariate_identity()}, {1, univariate_identity()}});
    fs.push_back(f);
  }
  for (int k = 1; k <= levels; ++k) {
    const auto& f = fs[static_cast<std::size_t>(k - 1)];
    Approximant a{k, 0, f, HamiltonianFamily::from_separable("coupled", 1, 2, f), 0.0, 0.0, 0.0, true, false};
    a.distance = measure_C3_separable(*f, H.separable().get(), box, 16);
    if (k < levels) a.consecutive = measure_C3_separable(*f, fs[static_cast<std::size_t>(k)].get(), box, 16);
    seq.items.push_back(a);
  }
  seq.achieved_levels = levels;
  return seq;
}

}  // namespace

TEST_CASE("iteration schedule") {
  const IterationSchedule s(0.3, 0.02, 4, 0.75);
  CHECK(s.ratio() == std::pow(4.0, -4.75));
  for (int k = 1; k <= 20; ++k) {
    CHECK(s.rho_k(k) == 0.3 / std::pow(2.0, k - 1));
    CHECK(s.delta_k(k) == s.rho_k(k) / 12.0);
    CHECK(s.r_k(k) == doctest::Approx(0.02 * std::pow(std::pow(4.0, -4.75), k - 1)).epsilon(1e-15));
    CHECK(s.drift_bound(k) <= 4.0 / 3.0 * 0.02);
    CHECK(s.increment_envelope(k) >= s.r_k(k));
  }
  CHECK(s.rho_k(1) == 0.3);
  CHECK(s.tail_after(3) == doctest::Approx(s.r_k(4) + s.r_k(5) + s.r_k(6) + s.r_k(7)).epsilon(1e-10));
  CHECK_THROWS_AS(IterationSchedule(0.0, 0.1, 4, 1.0), Error);
}

TEST_CASE("integrable rotator stops at the first step") {
  const auto f = golden();
  const auto H = family("rotator", 0.0);
  const DriveResult res = drive(H, flat(f), zero2(), f, kRho, kR);
  CHECK(res.terminated_at_fixed_point);
  REQUIRE(res.states.size() == 1);
  CHECK(res.states[0].iterations == 0);
  CHECK(res.states[0].residual < 1e-15);
  CHECK(res.true_residual < 1e-15);
}

TEST_CASE("analytic family: first step and two-path consistency") {
  const auto f = golden();
  const auto H = family("forced_rotator", 1e-3);
  const auto K0 = flat(f);

  DriverContext ctx = prepare_driver(H, K0, zero2(), f, kRho, kR);
  CHECK(ctx.sequence.k0 == 2);
  CHECK(ctx.c_obs > 0.0);
  CHECK(ctx.barred.c > ctx.model(ctx.mu0, ctx.d0, ctx.v0, ctx.tau0));
  const IterationState one = step_one(ctx);
  SolveOptions so;
  so.tol = std::max(1e-13, std::min(1e-10, 1e-3 * ctx.schedule.r_k(2)));
  const TorusSolution direct = solve_analytic(H, zero2(), K0, f, make_budget(kRho, kR, f.gamma, f.sigma, ctx.barred.c), so);
  // H^{k0} = H: the first step is exactly the analytic solve.
  CHECK(one.lambda == direct.lambda);
  const auto a = one.K.periodic.data(), b = direct.K.periodic.data();
  CHECK(std::equal(a.begin(), a.end(), b.begin()));

  const DriveResult res = drive(H, K0, zero2(), f, kRho, kR);
  CHECK(res.states.size() >= 3);
  for (const auto& st : res.states) CHECK(st.passed());
  CHECK(res.c1_certified);
  // Direct solve to the driver's final tolerance.
  so.tol = 1e-13;
  const TorusSolution fine = solve_analytic(H, zero2(), K0, f, make_budget(kRho, kR, f.gamma, f.sigma, res.c), so);
  const double dK = strip_norm(res.K.periodic - fine.K.periodic, 0.0).value;
  const double dl = (res.lambda - fine.lambda).cwiseAbs().maxCoeff();
  MESSAGE("two paths: |dK| = " << dK << ", |dlambda| = " << dl << ", tail " << res.tail);
  CHECK(dK <= res.tail);
  CHECK(dl <= res.tail);
}

TEST_CASE("finitely smooth family end to end") {
  const auto f = golden();
  const auto H = family("finite_smoothness", 1e-4);
  const DriveResult res = drive(H, flat(f), zero2(), f, kRho, kR);
  CHECK(res.states.size() >= 4);
  for (const auto& st : res.states) {
    CHECK(st.passed());
    CHECK(st.increment <= res.schedule.r_k(st.k));
    CHECK(st.increment <= res.schedule.increment_envelope(st.k));
  }
  for (const auto& c : res.first.conditions) CHECK_MESSAGE(c.passed(), c.name);
  // Repeated approximants: the error of step k is the residual left by step k - 1.
  for (std::size_t i = 1; i < res.states.size(); ++i) {
    if (res.states[i].approximant == res.states[i - 1].approximant ||
        res.states[i].hamiltonian_increment == 0.0)
      CHECK(res.states[i].e_norm == doctest::Approx(res.states[i - 1].residual).epsilon(1e-9));
  }
  CHECK(res.true_residual < res.residual_bound);
  CHECK(res.c1_certified);
  MESSAGE("finite smoothness: k0 " << res.k0 << ", levels " << res.achieved_levels << ", steps "
                                    << res.states.size() << ", C3 tail " << res.c3_tail << ", true residual "
                                    << res.true_residual);

  std::ostringstream csv;
  write_ledger_csv(csv, res);
  const std::string text = csv.str();
  CHECK(text.rfind("k,rho_k,delta_k,r_k,e_norm,lambda_drift_margin", 0) == 0);
  CHECK(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) == res.states.size() + 1);
}

TEST_CASE("changing approximants exercise the Neumann audit") {
  const auto f = golden();
  const auto H = family("forced_rotator", 1e-3);
  DriverContext ctx = prepare_driver(H, flat(f), zero2(), f, kRho, kR);
  ctx.sequence = coupled_sequence(H, ctx.rect.measurement_box(2.0 * kR), 10, 0.5);
  StepOneReport rep;
  IterationState st = step_one(ctx, &rep);
  CHECK(st.passed());
  const LedgerEntry* psi = nullptr;
  for (const auto& c : rep.conditions)
    if (c.name == "psi_bound") psi = &c;
  REQUIRE(psi != nullptr);
  CHECK(psi->measured > 0.0);
  CHECK(psi->passed());
  for (int k = 2; k <= 4; ++k) {
    st = inductive_step(ctx, st);
    CHECK(st.passed());
    CHECK(st.psi_norm > 0.0);
    CHECK(st.hamiltonian_increment > 0.0);
    const LedgerEntry* tau_prop = st.find("tau_propagation");
    REQUIRE(tau_prop != nullptr);
    CHECK(tau_prop->passed());
  }

  // A jump in the coupling breaks the inductive smallness at the next step.
  auto jump = std::make_shared<SeparableFunction>(*H.separable());
  jump->add_term(0.05, {{0, univariate_polynomial({0.0L, 1.0L})}});
  Approximant& next = ctx.sequence.items[static_cast<std::size_t>(ctx.approximant_index(5) - 1)];
  next.f = jump;
  next.family = HamiltonianFamily::from_separable("jump", 1, 2, jump);
  try {
    inductive_step(ctx, st);
    FAIL("expected LedgerViolation");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::LedgerViolation);
  }
}

TEST_CASE("hypothesis failures") {
  const auto f = golden();
  const auto H = family("forced_rotator", 1e-3);
  DriverOptions big;
  big.c = 1.0;
  try {
    drive(H, flat(f), zero2(), f, kRho, kR, big);
    FAIL("expected SmallnessFailed");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SmallnessFailed);
    CHECK(e.is_hypothesis_failure());
  }

  DriverContext ctx = prepare_driver(H, flat(f), zero2(), f, kRho, kR);
  ctx.sequence = coupled_sequence(H, ctx.rect.measurement_box(2.0 * kR), 4, 1e15);
  CHECK_THROWS_AS(step_one(ctx), Error);
  try {
    step_one(ctx);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ApproximantExhausted);
  }
}
