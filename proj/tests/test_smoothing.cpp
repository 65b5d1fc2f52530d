#include <cmath>
#include <random>

#include "doctest.h"
#include "kamtori/errors.hpp"
#include "kamtori/smoothing.hpp"
#include "test_support.hpp"

using namespace kam;
using kam::testing::kTwoPi;

namespace {

constexpr double kRho = 0.1;
constexpr double kR = 0.05;

TorusEmbedding flat1() { return TorusEmbedding::flat(1, 16, Eigen::VectorXd::Zero(1)); }

TorusEmbedding wobbly1() {
  TorusEmbedding K = flat1();
  const int k1[] = {1};
  K.periodic.set(k1, 1, Complex(0.01, 0.0));
  K.periodic.set(k1, 0, Complex(0.0, 0.005));
  return K;
}

RectangleDomain rect_for(const TorusEmbedding& K, int d = 2) {
  return build_rectangle(K, kRho, kR, ParameterDomain::unbounded(d), Eigen::VectorXd::Zero(d));
}

HamiltonianFamily finite_smooth(double eps) {
  FamilyOptions o;
  o.epsilon = eps;
  o.smoothness = 4;
  return builtin_family("finite_smoothness", 1, o);
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double a : v) x(i++) = a;
  return x;
}

}  // namespace

TEST_CASE("rectangle around a flat torus") {
  const RectangleDomain rect = rect_for(flat1());
  // The p-range must hold [-3r - r/10, 3r + r/10]; the q-range spans the period plus the strip.
  CHECK(rect.phase.lower(1) <= -0.155 + 1e-15);
  CHECK(rect.phase.upper(1) >= 0.155 - 1e-15);
  CHECK(rect.phase.lower(0) <= -kRho - 0.155 + 1e-12);
  CHECK(rect.phase.upper(0) >= 1.0 - 1.0 / 64 + kRho + 0.155 - 1e-12);
  CHECK(rect.containment_defect == 0.0);
  CHECK(rect.params.lower(0) == doctest::Approx(-2 * kR));

  const RectangleDomain wob = rect_for(wobbly1());
  CHECK(wob.containment_defect == 0.0);
  // The strip widens the p-range by about 0.01 (cosh(2 pi rho) - 1) beyond the real image.
  CHECK(wob.tube.upper(1) > wob.image.upper(1));

  // Tiny r: the rectangle is the sampled box plus the margin.
  const RectangleDomain tiny = build_rectangle(flat1(), kRho, 1e-9, ParameterDomain::unbounded(2),
                                               Eigen::VectorXd::Zero(2));
  CHECK(tiny.phase.upper(1) == doctest::Approx(3.1e-9).epsilon(1e-6));
}

TEST_CASE("smooth step and cutoff profile") {
  CHECK(smooth_step(0.0L) == 0.0L);
  CHECK(smooth_step(-1.0L) == 0.0L);
  CHECK(smooth_step(1.0L) == 1.0L);
  CHECK(smooth_step(0.5L) == doctest::Approx(0.5));
  long double prev = 0.0L;
  for (int i = 1; i < 100; ++i) {
    const long double v = smooth_step(i / 100.0L);
    CHECK(v >= prev - 1e-18L);
    if (i < 90) CHECK(v > prev);
    prev = v;
  }
  // Jet derivatives against central differences.
  const long double t = 0.3L, h = 1e-5L;
  const Jet j = smooth_step_jet(t);
  CHECK(static_cast<double>(j[1]) ==
        doctest::Approx(static_cast<double>((smooth_step(t + h) - smooth_step(t - h)) / (2 * h))).epsilon(1e-7));
  CHECK(static_cast<double>(j[2]) ==
        doctest::Approx(static_cast<double>(smooth_step_jet(t + h)[1] - smooth_step_jet(t - h)[1]) / (2 * 1e-5))
            .epsilon(1e-6));

  const CutoffFunction psi(flat1(), kR);
  CHECK(psi.is_flat());
  CHECK(psi(vec({0.0, 0.0})) == 1.0);
  CHECK(psi(vec({0.3, 2 * kR})) == 1.0);
  CHECK(psi(vec({0.3, 3 * kR})) == 0.0);
  CHECK(psi(vec({0.3, -2.5 * kR})) == 0.0);
  const double mid = psi(vec({0.7, 2.25 * kR}));
  CHECK(mid > 0.0);
  CHECK(mid < 1.0);
  double last = 1.0;
  for (int i = 0; i <= 50; ++i) {
    const double v = psi(vec({0.1, kR * (2.0 + 0.5 * i / 50.0)}));
    CHECK(v <= last);
    CHECK(v >= 0.0);
    last = v;
  }
}

TEST_CASE("cutoff around a non-flat torus") {
  const TorusEmbedding K = wobbly1();
  const CutoffFunction psi(K, kR);
  CHECK_FALSE(psi.is_flat());
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int s = 0; s < 200; ++s) {
    const Eigen::VectorXd theta = Eigen::VectorXd::Constant(1, unit(rng));
    const Eigen::VectorXd z = K.eval_real(theta);
    CHECK(psi(z) == 1.0);
    Eigen::VectorXd far = z;
    far(1) += 3.2 * kR;
    CHECK(psi(far) == 0.0);
  }
  // Fourth differences across the transition shell settle under step refinement, as they do
  // for a C^4 function and not across a kink.
  auto worst_d4 = [&](double h) {
    double worst = 0.0;
    for (int i = 0; i <= 200; ++i) {
      const double p = 0.01 + kR * (1.9 + 0.7 * i / 200.0);
      auto f = [&](double dp) { return psi(vec({0.0, p + dp})); };
      const double d4 = (f(2 * h) - 4 * f(h) + 6 * f(0) - 4 * f(-h) + f(-2 * h)) / std::pow(h, 4);
      CHECK(std::isfinite(d4));
      worst = std::max(worst, std::abs(d4));
    }
    return worst;
  };
  const double coarse = worst_d4(2e-3 * kR), fine = worst_d4(1e-3 * kR);
  MESSAGE("fourth differences: " << coarse << " and " << fine);
  CHECK(fine < 1.5 * coarse);
  CHECK(fine > coarse / 1.5);
}

TEST_CASE("localization leaves B_2r untouched") {
  const TorusEmbedding K = flat1();
  const RectangleDomain rect = rect_for(K);
  const CutoffFunction psi(K, kR);
  const HamiltonianFamily H = finite_smooth(1e-3);
  const HamiltonianFamily L = localize(H, psi, rect);
  REQUIRE(L.separable());
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> q(0.0, 1.0), p(-2 * kR, 2 * kR), a(-2 * kR, 2 * kR);
  int identical = 0;
  for (int s = 0; s < 10000; ++s) {
    const Eigen::VectorXd x = vec({q(rng), p(rng)}), l = vec({a(rng), a(rng)});
    identical += L.value(x, l) == H.value(x, l);
  }
  CHECK(identical == 10000);
  CHECK(L.value(vec({0.2, 2.6 * kR}), vec({0.01, 0.02})) == 0.0);
  CHECK(L.value(vec({0.2, -2.6 * kR}), vec({0.01, 0.02})) == 0.0);
  const Eigen::VectorXd x = vec({0.37, 0.0}), l = vec({0.01, -0.02});
  CHECK((L.grad_x(x, l) - H.grad_x(x, l)).cwiseAbs().maxCoeff() < 1e-10);

  // Dense path for a non-flat torus.
  const TorusEmbedding W = wobbly1();
  const RectangleDomain wrect = rect_for(W);
  const HamiltonianFamily LW = localize(H, CutoffFunction(W, kR), wrect);
  const Eigen::VectorXd z = W.eval_real(Eigen::VectorXd::Constant(1, 0.4));
  CHECK(LW.value(z, l) == H.value(z, l));
  CHECK((LW.grad_x(z, l) - H.grad_x(z, l)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("Bernstein operator") {
  for (int m : {1, 2, 3, 7, 64}) {
    const auto id = bernstein_factor(univariate_identity(), 0.0, 1.0, m);
    CHECK(static_cast<double>((*id)(0.3L)) == 0.3);
  }
  // Force the sampled path for x by wrapping it in a callable.
  const auto x_callable = make_univariate([](long double x) { return Jet::variable(x); });
  const auto sq_callable = make_univariate([](long double x) { return Jet::variable(x) * Jet::variable(x); });
  const auto one = make_univariate([](long double) { return Jet::constant(2.5L); });
  for (int m : {2, 3, 4, 8}) {
    const auto bx = bernstein_factor(x_callable, 0.0, 1.0, m);
    const auto bsq = bernstein_factor(sq_callable, 0.0, 1.0, m);
    const auto bc = bernstein_factor(one, 0.0, 1.0, m);
    for (long double t : {0.0L, 0.1L, 0.45L, 0.8L, 1.0L}) {
      CHECK(std::abs(static_cast<double>((*bx)(t) - t)) < 1e-15);
      const long double expect = t * t + t * (1.0L - t) / m;
      CHECK(std::abs(static_cast<double>((*bsq)(t) - expect)) < 1e-12);
      // Exact derivatives of x^2 + x(1 - x)/m.
      const Jet jt = bsq->jet(t);
      CHECK(std::abs(static_cast<double>(jt[1] - (2 * t + (1 - 2 * t) / m))) < 1e-12);
      CHECK(std::abs(static_cast<double>(jt[2] - (2.0L - 2.0L / m))) < 1e-12);
      CHECK(std::abs(static_cast<double>(jt[3])) < 1e-11);
      CHECK(static_cast<double>((*bc)(t)) == doctest::Approx(2.5).epsilon(1e-15));
    }
  }
  // Scaled interval and large degree.
  const auto big = bernstein_factor(sq_callable, -1.0, 3.0, 1 << 14);
  CHECK(std::abs(static_cast<double>((*big)(0.5L) - (0.25L + 1.5L * 2.5L / 16384.0L))) < 1e-12);
  CHECK_THROWS_AS(bernstein_factor(sq_callable, 0.0, 1.0, (1 << 14) + 1), Error);
  try {
    bernstein_factor(sq_callable, 0.0, 1.0, 1 << 15);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegreeOverflow);
  }
  CHECK_THROWS_AS((*bernstein_factor(sq_callable, 0.0, 1.0, 4))(1.5L), Error);

  // Monotone C0 improvement for a smooth function.
  const auto f = make_univariate([](long double x) { return exp(Jet::variable(x)) * sin(3.0L * Jet::variable(x)); });
  double prev = 1e300;
  for (int m = 4; m <= 1024; m *= 2) {
    const auto b = bernstein_factor(f, 0.0, 1.0, m);
    double dist = 0.0;
    for (int i = 0; i <= 200; ++i) {
      const long double t = i / 200.0L;
      dist = std::max(dist, static_cast<double>(std::abs((*b)(t) - (*f)(t))));
    }
    CHECK(dist <= 1.05 * prev);
    if (m >= 64) CHECK(dist < 0.6 * prev);  // O(1/m)
    prev = dist;
  }
}

TEST_CASE("tensor Bernstein") {
  Box box{vec({0.0, -1.0}), vec({1.0, 1.0})};
  const TensorBernstein bl([](const Eigen::VectorXd& x) { return 1.0 + 2 * x(0) - x(1) + 3 * x(0) * x(1); }, box, 5);
  const Eigen::VectorXd x = vec({0.3, 0.4});
  CHECK(bl.value(x) == doctest::Approx(1.0 + 0.6 - 0.4 + 0.36).epsilon(1e-14));
  CHECK(bl.partial(x, {1, 1}) == doctest::Approx(3.0).epsilon(1e-13));
  CHECK(bl.partial(x, {1, 0}) == doctest::Approx(2.0 + 1.2).epsilon(1e-13));
  // x0^2 picks up x0(1 - x0)/m; matches the univariate operator.
  const TensorBernstein sq([](const Eigen::VectorXd& x) { return x(0) * x(0) * x(1); }, box, 4);
  const auto u = bernstein_factor(make_univariate([](long double t) { return Jet::variable(t) * Jet::variable(t); }),
                                  0.0, 1.0, 4);
  CHECK(sq.value(x) == doctest::Approx(static_cast<double>((*u)(0.3L)) * 0.4).epsilon(1e-13));
  CHECK(sq.partial(x, {2, 1}) == doctest::Approx(static_cast<double>(u->jet(0.3L)[2])).epsilon(1e-12));
}

TEST_CASE("periodic approximants") {
  const auto s = make_univariate([](long double q) { return sin(2.0L * std::numbers::pi_v<long double> * Jet::variable(q)); });
  for (int m : {1, 4, 32}) {
    const auto a = periodic_factor(s, m);
    const double mu = static_cast<double>(m) / (m + 1);
    for (long double q : {0.0L, 0.13L, 0.5L, 0.77L}) {
      const Jet j = a->jet(q);
      CHECK(static_cast<double>(j[0]) == doctest::Approx(mu * std::sin(kTwoPi * q)).epsilon(1e-13));
      CHECK(static_cast<double>(j[3]) ==
            doctest::Approx(-mu * std::pow(kTwoPi, 3) * std::cos(kTwoPi * q)).epsilon(1e-12));
    }
  }
  // A lifted angle keeps its slope; affine factors pass through.
  const auto lifted = make_univariate([](long double q) {
    return Jet::variable(q) + 0.1L * cos(2.0L * std::numbers::pi_v<long double> * Jet::variable(q));
  });
  const auto a = periodic_factor(lifted, 8);
  CHECK(static_cast<double>((*a)(0.25L)) == doctest::Approx(0.25).epsilon(1e-13));
  CHECK(static_cast<double>((*a)(1.0L) - (*a)(0.0L)) == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(static_cast<double>((*a)(0.0L)) == doctest::Approx(0.1 * 8.0 / 9.0).epsilon(1e-13));
  const auto id = univariate_identity();
  CHECK(periodic_factor(id, 8) == id);
  // Delayed means reproduce trigonometric polynomials of degree <= m, on any period.
  const auto c3 = make_univariate([](long double x) {
    return cos(3.0L * std::numbers::pi_v<long double> * (Jet::variable(x) + (-0.2L)));
  });
  const auto d = trig_factor(c3, 0.2, 2.0, 3, TrigKernel::Delayed);
  for (long double x : {0.2L, 0.5L, 1.9L}) {
    CHECK(std::abs(static_cast<double>(d->jet(x)[0] - c3->jet(x)[0])) < 1e-13);
    CHECK(std::abs(static_cast<double>(d->jet(x)[3] - c3->jet(x)[3])) < 1e-10);
  }
  CHECK(parse_backend("trigonometric") == SmoothingBackend::Trigonometric);
  CHECK_THROWS_AS(parse_backend("spline"), Error);

  // Rough series: C3 distance decreases with the degree.
  const RoughSeries g(4, 512);
  const auto rough = make_univariate([g](long double q) { return g.jet(q); });
  double prev = 1e300;
  for (int m = 8; m <= 512; m *= 4) {
    const auto b = periodic_factor(rough, m);
    double d3 = 0.0;
    for (int i = 0; i < 64; ++i) d3 = std::max(d3, static_cast<double>(std::abs(b->jet(i / 64.0L)[3] - g.jet(i / 64.0L)[3])));
    CHECK(d3 < prev);
    prev = d3;
  }
}

TEST_CASE("C^k distances") {
  Box unit{vec({0.0}), vec({1.0})};
  auto zero = [](const Eigen::VectorXd&) { return 0.0; };
  auto f = [](const Eigen::VectorXd& x) { return std::sin(kTwoPi * x(0)) + std::exp(x(0)); };
  CHECK(measure_Ck_distance(f, f, unit, 3, 50) == 0.0);
  auto c = [](const Eigen::VectorXd&) { return -1.75; };
  CHECK(measure_Ck_distance(c, zero, unit, 0, 10) == 1.75);
  CHECK(measure_Ck_distance(c, zero, unit, 3, 10) == doctest::Approx(1.75));
  auto s = [](const Eigen::VectorXd& x) { return std::sin(kTwoPi * x(0)); };
  CHECK(measure_Ck_distance(s, zero, unit, 1, 200, 1e-4) == doctest::Approx(kTwoPi).epsilon(0.01));

  // Exact separable measurement agrees with finite differences.
  SeparableFunction A(2), B(2);
  A.add_term(1.0, {{0, make_univariate([](long double x) { return sin(3.0L * Jet::variable(x)); })},
                   {1, univariate_polynomial({0.0L, 0.0L, 1.0L})}});
  B.add_term(0.5, {{0, univariate_identity()}});
  Box box{vec({0.0, -0.5}), vec({1.0, 0.5})};
  auto fa = [&](const Eigen::VectorXd& x) { return A.value(x); };
  auto fb = [&](const Eigen::VectorXd& x) { return B.value(x); };
  const double exact = measure_C3_separable(A, &B, box, 21);
  const double fd = measure_Ck_distance(fa, fb, box, 3, 21, 1e-3);
  CHECK(exact == doctest::Approx(fd).epsilon(1e-3));
  CHECK(measure_C3_separable(A, &A, box, 21) == 0.0);
  // |sin 3x * y^2|_{C^3} on the box: the largest entry is d^2/dx^2 d/dy = -18 y sin 3x, sampled at
  // x = 0.5, y = 1/2 on the grid.
  CHECK(measure_C3_separable(A, nullptr, box, 21) == doctest::Approx(9.0 * std::sin(1.5)).epsilon(1e-12));
}

TEST_CASE("subsequence selection") {
  const TorusEmbedding K = flat1();
  const RectangleDomain rect = rect_for(K);
  const int l = 4;
  const double sigma = 0.75;

  SUBCASE("affine target is reproduced") {
    auto f = std::make_shared<SeparableFunction>(4);
    f->add_term(1.0, {{1, univariate_identity()}, {2, univariate_identity()}});
    f->add_term(-1.0, {{0, univariate_identity()}, {3, univariate_identity()}});
    const auto H = HamiltonianFamily::from_separable("affine", 1, 2, f);
    const auto seq = select_subsequence(H, rect, l, sigma, 1e-3);
    CHECK(seq.A == 0.0);
    CHECK(seq.k0 == 2);
    CHECK(seq.envelope_holds());
    for (const auto& item : seq.items) {
      CHECK(item.distance == 0.0);
      CHECK(item.f == seq.items.front().f);
    }
  }

  SUBCASE("analytic target decays inside the envelope") {
    FamilyOptions o;
    o.epsilon = 1e-3;
    const HamiltonianFamily H = builtin_family("forced_rotator", 1, o);
    SelectionOptions opt;
    opt.levels = 4;
    const auto seq = select_subsequence(H, rect, l, sigma, 1e-3, opt);
    CHECK(seq.A > 0.0);
    CHECK(seq.achieved_levels >= 1);
    CHECK(seq.envelope_holds());
    for (std::size_t i = 1; i < seq.candidates.size(); ++i)
      CHECK(seq.candidates[i].distance <= 1.05 * seq.candidates[i - 1].distance);
    for (const auto& item : seq.items) {
      if (item.accepted) CHECK(item.distance <= item.threshold);
      CHECK(item.consecutive <= item.threshold);
    }
    MESSAGE("analytic: A = " << seq.A << ", levels " << seq.achieved_levels << ", k0 " << seq.k0
                             << ", top degree " << seq.items.back().degree);
  }

  SUBCASE("localized target stagnates under Bernstein") {
    const HamiltonianFamily H = localize(finite_smooth(1e-4), CutoffFunction(K, kR), rect);
    SelectionOptions opt;
    opt.degree_cap = 1024;
    try {
      select_subsequence(H, rect, l, sigma, 1e-4, opt);
      FAIL("expected StagnationError");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::StagnationError);
    }
  }

  SUBCASE("finitely smooth target up to the distance plateau") {
    const HamiltonianFamily H = localize(finite_smooth(1e-4), CutoffFunction(K, kR), rect);
    SelectionOptions opt;
    opt.levels = 5;
    opt.backend = SmoothingBackend::Trigonometric;
    const auto seq = select_subsequence(H, rect, l, sigma, 1e-4, opt);
    CHECK(seq.achieved_levels >= 2);
    CHECK(seq.plateau);
    CHECK(seq.envelope_holds());
    CHECK(seq.k0 >= 2);
    CHECK(seq.size() >= seq.k0 + 1);
    bool any_repeat = false;
    for (const auto& item : seq.items) any_repeat = any_repeat || item.repeated;
    CHECK(any_repeat);
    MESSAGE("finite smoothness: A = " << seq.A << ", levels " << seq.achieved_levels << ", k0 " << seq.k0
                                      << ", top degree " << seq.items.back().degree << ", distance "
                                      << seq.items.back().distance);
  }

  SUBCASE("stagnation") {
    const HamiltonianFamily H = localize(finite_smooth(1e-4), CutoffFunction(K, kR), rect);
    SelectionOptions opt;
    opt.degree_cap = 16;
    CHECK_THROWS_AS(select_subsequence(H, rect, l, sigma, 1e-4, opt), Error);
    CHECK_THROWS_AS(select_subsequence(H, rect, 3, sigma, 1e-4), Error);
  }
}

TEST_CASE("k0 rule") {
  // A 4^{-(k0-1) e} <= e0 with e = 5.5: 4^{5.5} = 2048.
  CHECK(choose_k0(1.0, 5.5, 1.0) == 2);
  CHECK(choose_k0(2048.0, 5.5, 1.0) == 2);
  CHECK(choose_k0(2049.0, 5.5, 1.0) == 3);
  CHECK(choose_k0(10.0, 5.5, 1e-3) == 3);
  CHECK_THROWS_AS(choose_k0(1.0, 5.5, 0.0), Error);
}
