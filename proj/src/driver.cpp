#include "kamtori/driver.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include "kamtori/errors.hpp"
#include "kamtori/nondegeneracy.hpp"

namespace kam {

namespace {

double row_sum_norm(const Eigen::MatrixXd& a) { return a.cwiseAbs().rowwise().sum().maxCoeff(); }

/// |F|_{C^3} on a box of (x, lambda).
double c3_norm(const HamiltonianFamily& F, const Box& box, int points) {
  if (F.separable()) return measure_C3_separable(*F.separable(), nullptr, box, points);
  const int m = F.phase_dim();
  auto value = [&F, m](const Eigen::VectorXd& z) {
    return F.value(z.head(m), z.tail(z.size() - m));
  };
  auto zero = [](const Eigen::VectorXd&) { return 0.0; };
  return measure_Ck_distance(value, zero, box, 3, std::min(points, 6));
}

/// Real image of K widened by `radius` on every phase axis, times the parameter box.
Box tube_box(const TorusEmbedding& K, double radius, const Box& params) {
  const int n = K.n();
  const GridField pts = K.sample(TorusGrid::for_kmax(n, K.kmax()));
  Box b;
  b.lower.resize(2 * n + params.lower.size());
  b.upper.resize(b.lower.size());
  for (int i = 0; i < 2 * n; ++i) {
    b.lower(i) = pts.col(i).minCoeff() - radius;
    b.upper(i) = pts.col(i).maxCoeff() + radius;
  }
  b.lower.tail(params.lower.size()) = params.lower;
  b.upper.tail(params.upper.size()) = params.upper;
  return b;
}

double strip_distance(const TorusEmbedding& a, const TorusEmbedding& b, double rho) {
  const int kmax = std::max(a.kmax(), b.kmax());
  return strip_norm(a.periodic.with_kmax(kmax) - b.periodic.with_kmax(kmax), rho).value;
}

double jacobian_distance(const TorusEmbedding& a, const TorusEmbedding& b) {
  const int kmax = std::max(a.kmax(), b.kmax());
  return strip_norm(jacobian(a.periodic.with_kmax(kmax) - b.periodic.with_kmax(kmax)), 0.0).value;
}

double max_abs(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

double solve_tolerance(const DriverContext& ctx, int k) {
  return std::max(ctx.options.tol_floor, std::min(ctx.options.tol, 1e-3 * ctx.schedule.r_k(k + 1)));
}

void throw_if_failed(const std::vector<LedgerEntry>& entries, int k, const char* when) {
  std::ostringstream msg;
  bool failed = false;
  for (const auto& e : entries) {
    if (e.passed()) continue;
    failed = true;
    msg << e.name << "(" << k << ") measured " << e.measured << (e.strict ? " not below " : " above ") << e.bound
        << "; ";
  }
  if (failed) throw Error(ErrorKind::LedgerViolation, std::string(when) + ": " + msg.str());
}

}  // namespace

// ------------------------------------------------------------------ schedule

IterationSchedule::IterationSchedule(double rho_, double r_, int l_, double sigma_)
    : rho(rho_), r(r_), l(l_), sigma(sigma_) {
  if (!(rho > 0.0) || !(r > 0.0)) throw Error(ErrorKind::InvalidArgument, "schedule needs rho > 0 and r > 0");
  if (l < 0 || sigma < 0.0) throw Error(ErrorKind::InvalidArgument, "schedule needs l >= 0 and sigma >= 0");
}

double IterationSchedule::ratio() const { return std::pow(4.0, -(l + sigma)); }
double IterationSchedule::rho_k(int k) const { return std::ldexp(rho, -(k - 1)); }
double IterationSchedule::delta_k(int k) const { return rho_k(k) / 12.0; }
double IterationSchedule::r_k(int k) const { return r * std::pow(ratio(), k - 1); }

double IterationSchedule::drift_bound(int k) const {
  double s = 0.0;
  for (int i = 0; i < k; ++i) s += std::pow(ratio(), i);
  return r * s;
}

double IterationSchedule::tail_after(int k) const { return r_k(k + 1) / (1.0 - ratio()); }

double IterationSchedule::increment_envelope(int k) const { return r * std::pow(4.0, -static_cast<double>(l) * (k - 1)); }

// ------------------------------------------------------------------ state

bool IterationState::passed() const {
  return std::all_of(ledger.begin(), ledger.end(), [](const LedgerEntry& e) { return e.passed(); });
}

const LedgerEntry* IterationState::find(const std::string& name) const {
  for (const auto& e : ledger)
    if (e.name == name) return &e;
  return nullptr;
}

int DriverContext::approximant_index(int k) const {
  return std::min(sequence.k0 + k - 1, sequence.size());
}

const Approximant& DriverContext::approximant(int k) const { return sequence.at(approximant_index(k)); }

// ------------------------------------------------------------------ preparation

DriverContext prepare_driver(const HamiltonianFamily& H, const TorusEmbedding& K0, const Eigen::VectorXd& lambda0,
                             const FrequencyVector& omega, double rho, double r, const DriverOptions& options) {
  if (K0.n() != H.n() || omega.n() != H.n())
    throw Error(ErrorKind::InvalidArgument, "torus, frequency and family dimensions differ");
  if (options.k_stop < 1) throw Error(ErrorKind::InvalidArgument, "k_stop must be >= 1");
  DriverContext ctx(H);
  ctx.options = options;
  ctx.omega = omega;
  ctx.K0 = K0;
  ctx.lambda0 = lambda0;
  const int l = H.smoothness_class().value_or(options.l);
  ctx.schedule = IterationSchedule(rho, r, l, omega.sigma);

  const int d = H.param_dim();
  const ParameterDomain Q =
      options.Q.center.size() == d ? options.Q : ParameterDomain::unbounded(d);
  ctx.rect = build_rectangle(K0, rho, r, Q, lambda0);
  const Box box = ctx.rect.measurement_box(2.0 * r);

  ctx.e0_norm = strip_norm(error_function(H, lambda0, K0, omega.omega), rho).value;
  const NondegeneracyData nd0 = compute_nondegeneracy(K0, H, lambda0, rho);
  ctx.d0 = nd0.d;
  ctx.v0 = nd0.v;
  ctx.tau0 = nd0.tau;
  ctx.mu0 = c3_norm(H, box, options.selection.points_per_axis);

  const KamBudget unit = make_budget(rho, r, omega.gamma, omega.sigma, 1.0);
  BarredConstants& b = ctx.barred;
  b.beta = unit.beta_total;
  b.mu = ctx.mu0 + 1.0;
  b.d = ctx.d0 + b.beta;
  b.v = ctx.v0 + b.beta;
  b.tau = ctx.tau0 + b.beta + 1.0;
  const double barred_product = (1.0 + b.mu) * (1.0 + b.d) * (1.0 + b.v) * (1.0 + b.tau);

  if (options.c > 0.0) {
    b.c = options.c;
    ctx.model.c_poly = options.c / barred_product;
  } else {
    // Probe solve of H itself: the observed contraction constant, scaled to the starting scalars.
    if (ctx.e0_norm > 0.0) {
      SolveOptions probe = options.solve;
      probe.tol = options.tol;
      probe.enforce_drift = false;
      const TorusSolution sol = solve_analytic(H, lambda0, K0, omega, unit, probe);
      ctx.c_obs = calibrate_c(sol.history);
    }
    const double start = (1.0 + ctx.mu0) * (1.0 + ctx.d0) * (1.0 + ctx.v0) * (1.0 + ctx.tau0);
    ctx.model.c_poly = ctx.c_obs > 0.0 ? options.c_safety * ctx.c_obs / start : 1.0 / start;
    b.c = ctx.model(b.mu, b.d, b.v, b.tau);
  }

  const SmallnessLedger hyp = check_smallness(make_budget(rho, r, omega.gamma, omega.sigma, b.c), ctx.e0_norm);
  if (!hyp.passed()) {
    std::ostringstream msg;
    msg << "||e0|| = " << ctx.e0_norm << " with c = " << b.c << ": c gamma^-4 delta0^-4sigma ||e0|| = "
        << hyp.lhs_newton << " (needs < 1), c gamma^-2 delta0^-2sigma ||e0|| = " << hyp.lhs_drift
        << " (needs < r = " << r << ")";
    throw Error(ErrorKind::SmallnessFailed, msg.str());
  }

  const int levels = std::max(options.selection.levels, options.k_stop + 1);
  if (H.is_analytic()) {
    ctx.sequence = identity_sequence(H, levels);
    ctx.sequence.measurement_box = box;
  } else {
    const CutoffFunction psi(K0, r);
    ctx.localized = localize(H, psi, ctx.rect);
    SelectionOptions sel = options.selection;
    sel.levels = levels;
    ctx.sequence = select_subsequence(*ctx.localized, ctx.rect, l, omega.sigma, ctx.e0_norm, sel);
  }
  return ctx;
}

// ------------------------------------------------------------------ first step

IterationState step_one(DriverContext& ctx, StepOneReport* report) {
  const BarredConstants& b = ctx.barred;
  const double rho = ctx.schedule.rho;
  const double r = ctx.schedule.r;
  const double gamma = ctx.omega.gamma, sigma = ctx.omega.sigma;
  const double delta0 = rho / 12.0;
  const NondegeneracyData nd0 = compute_nondegeneracy(ctx.K0, ctx.H, ctx.lambda0, rho);
  const ApproximantSequence& seq = ctx.sequence;
  const int last = seq.size();

  StepOneReport rep;
  int k0 = seq.k0;
  LambdaData lambda_k0;
  double neumann = 0.0, psi = 0.0;
  for (;; ++k0) {
    if (k0 > last) {
      std::ostringstream msg;
      msg << "none of the " << last << " approximants satisfies the approximation conditions and the Neumann test; last conditions: ";
      for (const auto& c : rep.conditions)
        if (!c.passed()) msg << c.name << " " << c.measured << " vs " << c.bound << "; ";
      throw Error(ErrorKind::ApproximantExhausted, msg.str());
    }
    double worst = 0.0, sum = seq.at(k0).distance;
    for (int j = k0; j <= last; ++j) worst = std::max(worst, seq.at(j).distance);
    for (int j = k0 + 1; j <= last; ++j) sum += seq.at(j - 1).consecutive;
    lambda_k0 = compute_Lambda(ctx.K0, nd0.N, seq.at(k0).family, ctx.lambda0, rho, {}, false);
    const Eigen::MatrixXd avg_psi = lambda_k0.average - nd0.Lambda_avg;
    psi = max_entry(avg_psi);
    neumann = row_sum_norm(nd0.Lambda_avg_inv * avg_psi);
    rep.conditions = {
        {"approx_frame", b.d * (b.v + 1.0) * worst * b.tau, 0.25, true},
        {"approx_unit", worst, 1.0, true},
        {"approx_series", 2.0 * b.d * (b.v + 1.0) * b.tau * b.tau * sum, 1.0, true},
        {"neumann", neumann, 0.5, true},
    };
    if (std::all_of(rep.conditions.begin(), rep.conditions.end(), [](const LedgerEntry& e) { return e.passed(); }))
      break;
    ++rep.skipped;
  }
  ctx.sequence.k0 = k0;
  rep.k0 = k0;
  const Approximant& Hk = seq.at(k0);

  IterationState st;
  st.k = 1;
  st.approximant = k0;
  st.mu = c3_norm(Hk.family, seq.measurement_box, ctx.options.selection.points_per_axis);
  st.d = ctx.d0;
  st.v = ctx.v0;
  st.tau = lambda_k0.average_inv.size() ? max_entry(lambda_k0.average_inv) : std::numeric_limits<double>::infinity();
  st.tau_previous = ctx.tau0;
  st.psi_norm = psi;
  st.neumann_product = neumann;
  st.hamiltonian_increment = Hk.distance;
  st.c = ctx.model(st.mu, st.d, st.v, st.tau);
  st.e_norm = strip_norm(error_function(Hk.family, ctx.lambda0, ctx.K0, ctx.omega.omega), rho).value;

  const double lhs_newton = st.c * std::pow(gamma, -4.0) * std::pow(delta0, -4.0 * sigma) * st.e_norm;
  const double lhs_drift = st.c * std::pow(gamma, -2.0) * std::pow(delta0, -2.0 * sigma) * st.e_norm;
  std::vector<LedgerEntry> pre = {
      {"first_c", st.c, b.c, true},
      {"first_newton", lhs_newton, 1.0, true},
      {"first_drift", lhs_drift, r, true},
  };
  rep.conditions.insert(rep.conditions.end(), pre.begin(), pre.end());
  rep.conditions.push_back({"psi_bound", psi, b.d * (b.v + 1.0) * Hk.distance, false});
  if (report) *report = rep;
  throw_if_failed(pre, 1, "first step");

  SolveOptions so = ctx.options.solve;
  so.tol = solve_tolerance(ctx, 1);
  const TorusSolution sol =
      solve_analytic(Hk.family, ctx.lambda0, ctx.K0, ctx.omega, make_budget(rho, r, gamma, sigma, b.c), so);
  st.lambda = sol.lambda;
  st.K = sol.K;
  st.residual = sol.residual.value;
  st.iterations = sol.iterations();
  st.increment = strip_distance(st.K, ctx.K0, rho / 4.0);
  st.increment_strip = strip_distance(st.K, ctx.K0, ctx.schedule.rho_k(2));
  st.lambda_increment = max_abs(st.lambda - ctx.lambda0);
  st.dk_increment = jacobian_distance(st.K, ctx.K0);
  st.ledger = {
      {"lambda_drift", st.lambda_increment, r, false},
      {"K_drift", st.increment_strip, r, false},
      {"c_bound", st.c, b.c, false},
      {"newton_smallness", lhs_newton, 1.0, true},
      {"drift_smallness", lhs_drift, r, true},
      {"increment", st.increment, ctx.schedule.r_k(1), false},
  };
  throw_if_failed(st.ledger, 1, "first step");
  return st;
}

// ------------------------------------------------------------------ inductive step

IterationState inductive_step(const DriverContext& ctx, const IterationState& prev) {
  const BarredConstants& b = ctx.barred;
  const IterationSchedule& s = ctx.schedule;
  const int k = prev.k + 1;
  const double rho_k = s.rho_k(k), delta_k = s.delta_k(k), r_k = s.r_k(k);
  const double gamma = ctx.omega.gamma, sigma = ctx.omega.sigma;
  const int index = ctx.approximant_index(k), prev_index = ctx.approximant_index(k - 1);
  const Approximant& Hk = ctx.sequence.at(index);
  const Approximant& Hp = ctx.sequence.at(prev_index);

  IterationState st;
  st.k = k;
  st.approximant = index;
  st.e_norm = strip_norm(error_function(Hk.family, prev.lambda, prev.K, ctx.omega.omega), rho_k).value;
  st.mu = c3_norm(Hk.family, tube_box(prev.K, s.r_k(k - 1), ctx.rect.params),
                  ctx.options.selection.points_per_axis);
  const NondegeneracyData nd = compute_nondegeneracy(prev.K, Hk.family, prev.lambda, rho_k);
  st.d = nd.d;
  st.v = nd.v;
  st.tau = nd.tau;
  const LambdaData before = compute_Lambda(prev.K, nd.N, Hp.family, prev.lambda, rho_k, {}, false);
  st.tau_previous =
      before.average_inv.size() ? max_entry(before.average_inv) : std::numeric_limits<double>::infinity();
  const Eigen::MatrixXd avg_psi = nd.Lambda_avg - before.average;
  st.psi_norm = max_entry(avg_psi);
  st.neumann_product = before.average_inv.size() ? row_sum_norm(before.average_inv * avg_psi)
                                                  : std::numeric_limits<double>::infinity();
  st.hamiltonian_increment = index == prev_index ? 0.0 : ctx.sequence.at(prev_index).consecutive;
  st.c = ctx.model(st.mu, st.d, st.v, st.tau);

  const double lhs_newton = st.c * std::pow(gamma, -4.0) * std::pow(delta_k, -4.0 * sigma) * st.e_norm;
  const double lhs_drift = st.c * std::pow(gamma, -2.0) * std::pow(delta_k, -2.0 * sigma) * st.e_norm;
  st.ledger = {
      {"c_bound", st.c, b.c, false},
      {"newton_smallness", lhs_newton, 1.0, true},
      {"drift_smallness", lhs_drift, r_k, true},
      {"neumann", st.neumann_product, 0.5, true},
      // Relative slack 1e-12: with no Hamiltonian increment both sides are the same inverse recomputed.
      {"tau_propagation", st.tau,
       (st.tau_previous + 2.0 * b.d * (b.v + 1.0) * b.tau * b.tau * st.hamiltonian_increment) * (1.0 + 1e-12),
       false},
  };
  throw_if_failed(st.ledger, k, "before the solve");

  SolveOptions so = ctx.options.solve;
  so.tol = solve_tolerance(ctx, k);
  const TorusSolution sol =
      solve_analytic(Hk.family, prev.lambda, prev.K, ctx.omega, make_budget(rho_k, r_k, gamma, sigma, b.c), so);
  st.lambda = sol.lambda;
  st.K = sol.K;
  st.residual = sol.residual.value;
  st.iterations = sol.iterations();
  st.increment = strip_distance(st.K, prev.K, std::ldexp(s.rho, -2 * k));
  st.increment_strip = strip_distance(st.K, prev.K, s.rho_k(k + 1));
  st.lambda_increment = max_abs(st.lambda - prev.lambda);
  st.dk_increment = jacobian_distance(st.K, prev.K);

  std::vector<LedgerEntry> post = {
      {"lambda_drift", max_abs(st.lambda - ctx.lambda0), s.drift_bound(k), false},
      {"K_drift", strip_distance(st.K, ctx.K0, s.rho_k(k + 1)), s.drift_bound(k), false},
      {"increment", st.increment, r_k, false},
  };
  throw_if_failed(post, k, "after the solve");
  st.ledger.insert(st.ledger.begin(), post.begin(), post.begin() + 2);
  st.ledger.push_back(post[2]);
  return st;
}

// ------------------------------------------------------------------ driver

double real_torus_residual(const HamiltonianFamily& H, const Eigen::VectorXd& lambda, const TorusEmbedding& K,
                           const Eigen::VectorXd& omega, int points_per_dim) {
  const TorusGrid grid(K.n(), points_per_dim);
  const FourierMap dK = K.directional_derivative(omega);
  double worst = 0.0;
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const Eigen::VectorXd theta = grid.theta(p);
    const Eigen::VectorXd e = vector_field(H, K.eval_real(theta), lambda) - eval_real(dK, theta);
    worst = std::max(worst, e.cwiseAbs().maxCoeff());
  }
  return worst;
}

DriveResult drive(const HamiltonianFamily& H, const TorusEmbedding& K0, const Eigen::VectorXd& lambda0,
                  const FrequencyVector& omega, double rho, double r, const DriverOptions& options) {
  DriverContext ctx = prepare_driver(H, K0, lambda0, omega, rho, r, options);
  DriveResult out;
  out.schedule = ctx.schedule;
  out.states.push_back(step_one(ctx, &out.first));
  out.k0 = ctx.sequence.k0;

  // A residual below the tolerance floor with nothing left to change is a fixed point of every later step.
  const auto& seq = ctx.sequence;
  const bool constant = std::all_of(seq.items.begin() + (out.k0 - 1), seq.items.end(),
                                    [&](const Approximant& a) { return a.f == seq.at(out.k0).f; });
  out.terminated_at_fixed_point = constant && out.states.front().iterations == 0 &&
                                  out.states.front().residual <= options.tol_floor;

  if (!out.terminated_at_fixed_point) {
    for (int k = 2; k <= options.k_stop && ctx.schedule.r_k(k) >= options.stop_tolerance; ++k) {
      IterationState st = inductive_step(ctx, out.states.back());
      const double before = out.states.back().increment;
      if (st.increment > std::max(before, options.stop_tolerance)) {
        std::ostringstream msg;
        msg << "increment at k = " << k << " is " << st.increment << " after " << before;
        throw Error(ErrorKind::ConvergenceStalled, msg.str());
      }
      out.states.push_back(std::move(st));
    }
  }

  const IterationState& fin = out.states.back();
  out.K = fin.K;
  out.lambda = fin.lambda;
  out.tail = ctx.schedule.tail_after(fin.k);
  out.c3_tail = ctx.approximant(fin.k).distance;
  out.true_residual = real_torus_residual(H, out.lambda, out.K, omega.omega, options.residual_points);
  out.residual_bound = 10.0 * (out.c3_tail + ctx.schedule.r_k(fin.k));
  out.c1_certified = true;
  for (const auto& st : out.states) {
    const double bound = st.increment * std::ldexp(1.0, 2 * st.k) / (std::numbers::e * rho);
    out.c1_certified = out.c1_certified && st.dk_increment <= bound * (1.0 + 1e-12) + 1e-15;
  }
  out.c_poly = ctx.model.c_poly;
  out.c = ctx.barred.c;
  out.c_obs = ctx.c_obs;
  out.A = seq.A;
  out.achieved_levels = seq.achieved_levels;
  return out;
}

void write_ledger_csv(std::ostream& out, const DriveResult& result) {
  const IterationSchedule& s = result.schedule;
  out << "k,rho_k,delta_k,r_k,e_norm,lambda_drift_margin,K_drift_margin,c_bound_margin,newton_smallness_margin,drift_smallness_margin,increment,"
         "increment_envelope,lambda_increment,dk_increment,iterations,residual\n";
  out << std::setprecision(17);
  auto margin = [](const IterationState& st, const char* name) {
    const LedgerEntry* e = st.find(name);
    return e ? e->margin() : std::numeric_limits<double>::quiet_NaN();
  };
  for (const auto& st : result.states) {
    out << st.k << ',' << s.rho_k(st.k) << ',' << s.delta_k(st.k) << ',' << s.r_k(st.k) << ',' << st.e_norm;
    for (const char* name : {"lambda_drift", "K_drift", "c_bound", "newton_smallness", "drift_smallness"}) out << ',' << margin(st, name);
    out << ',' << st.increment << ',' << s.increment_envelope(st.k) << ',' << st.lambda_increment << ','
        << st.dk_increment << ',' << st.iterations << ',' << st.residual << '\n';
  }
}

}  // namespace kam
