#include "kamtori/kam_newton.hpp"

#include <cmath>
#include <sstream>

#include "kamtori/errors.hpp"

namespace kam {

namespace {

void store_row(GridField& field, Eigen::Index p, const Eigen::MatrixXd& a) {
  Eigen::Map<RowMatrix>(field.row(p).data(), a.rows(), a.cols()) = a;
}

FourierMap without_average(FourierMap map) {
  const std::size_t zero = map.modes().zero();
  for (int c = 0; c < map.m(); ++c) map.at(zero, c) = 0.0;
  return map;
}

double average_max(const FourierMap& map) {
  const Eigen::VectorXd a = average(map);
  return a.size() ? a.cwiseAbs().maxCoeff() : 0.0;
}

}  // namespace

KamBudget make_budget(double rho, double r, double gamma, double sigma, double c) {
  if (!(rho > 0.0) || !(r > 0.0) || !(gamma > 0.0) || !(c > 0.0))
    throw Error(ErrorKind::InvalidArgument, "budget parameters must be positive");
  KamBudget b;
  b.rho = rho;
  b.delta0 = std::min(1.0, rho / 12.0);
  b.r = r;
  b.gamma = gamma;
  b.sigma = sigma;
  b.c = c;
  const double base = std::pow(gamma, -2.0) * std::pow(b.delta0, 2.0 * sigma - 1.0);
  b.beta_step = base * std::pow(2.0, -4.0 * sigma);
  b.beta_total = base / (std::pow(2.0, 4.0 * sigma) - std::pow(2.0, 2.0 * sigma + 1.0));
  return b;
}

SmallnessLedger check_smallness(const KamBudget& b, double e_norm) {
  SmallnessLedger l;
  l.e_norm = e_norm;
  l.lhs_newton = b.c * std::pow(b.gamma, -4.0) * std::pow(b.delta0, -4.0 * b.sigma) * e_norm;
  l.lhs_drift = b.c * std::pow(b.gamma, -2.0) * std::pow(b.delta0, -2.0 * b.sigma) * e_norm;
  l.newton_ok = l.lhs_newton < 1.0;
  l.drift_ok = l.lhs_drift < b.r;
  l.margin_newton = 1.0 - l.lhs_newton;
  l.margin_drift = b.r - l.lhs_drift;
  return l;
}

FourierMap error_function(const HamiltonianFamily& H, const Eigen::VectorXd& lambda, const TorusEmbedding& K,
                          const Eigen::VectorXd& omega, AnalysisReport* report) {
  const int n = K.n();
  const TorusGrid grid = TorusGrid::for_kmax(n, K.kmax());
  const GridField x = K.sample(grid);
  GridField field(x.rows(), 2 * n);
  for (Eigen::Index p = 0; p < x.rows(); ++p) {
    const Eigen::VectorXd xp = x.row(p).transpose();
    field.row(p) = vector_field(H, xp, lambda).transpose();
  }
  FourierMap e = analyze(field, grid, K.kmax(), 2 * n, 1, report);
  e -= K.directional_derivative(omega);
  return e;
}

NewtonResult newton_step(const HamiltonianFamily& H, const Eigen::VectorXd& lambda, const TorusEmbedding& K,
                         const FrequencyVector& freq, double rho_in, double rho_out, const NewtonOptions& options) {
  if (!(rho_out < rho_in)) throw Error(ErrorKind::InvalidArgument, "rho_out must be below rho_in");
  const int n = K.n();
  const int kmax = K.kmax();
  const Eigen::VectorXd& omega = freq.omega;
  const TorusGrid grid = TorusGrid::for_kmax(n, kmax);
  const auto points = static_cast<Eigen::Index>(grid.size());
  const Eigen::MatrixXd J = symplectic_J(n);

  NewtonResult out;
  StepReport& rep = out.report;
  rep.rho_in = rho_in;
  rep.rho_out = rho_out;

  const FourierMap e = error_function(H, lambda, K, omega);
  rep.e_in = strip_norm(e, rho_in).value;
  if (rep.e_in == 0.0) {
    out.K = K;
    out.lambda = lambda;
    out.error = e;
    rep.delta_lambda = Eigen::VectorXd::Zero(lambda.size());
    return out;
  }

  // Pointwise frame M = [DK | J DK N] and its inverse.
  const GridField x = K.sample(grid);
  const GridField dk = sample(K.jacobian(), grid);
  const GridField ev = sample(e, grid);
  std::vector<Eigen::MatrixXd> M(static_cast<std::size_t>(points)), Minv(static_cast<std::size_t>(points));
  GridField V(points, 2 * n * n), Et(points, 2 * n), Bt(points, 4 * n * n);
  for (Eigen::Index p = 0; p < points; ++p) {
    const auto i = static_cast<std::size_t>(p);
    const Eigen::MatrixXd D = grid_matrix(dk, p, 2 * n, n);
    const Eigen::MatrixXd Nn = (D.transpose() * D).inverse();
    const Eigen::MatrixXd Vp = J * D * Nn;
    M[i].resize(2 * n, 2 * n);
    M[i] << D, Vp;
    Minv[i] = M[i].inverse();
    store_row(V, p, Vp);
    Et.row(p) = (Minv[i] * ev.row(p).transpose()).transpose();
    const Eigen::VectorXd xp = x.row(p).transpose();
    store_row(Bt, p, Minv[i] * (J * H.dgrad_dlambda(xp, lambda)));
  }

  // Torsion S = top block of M^{-1} (A V - d_omega V), A = J D^2 H.
  const GridField dV = sample(directional_derivative(analyze(V, grid, kmax, 2 * n, n), omega), grid);
  GridField S(points, n * n);
  for (Eigen::Index p = 0; p < points; ++p) {
    const auto i = static_cast<std::size_t>(p);
    const Eigen::VectorXd xp = x.row(p).transpose();
    const Eigen::MatrixXd A = J * H.hess_x(xp, lambda);
    const Eigen::MatrixXd T = Minv[i] * (A * grid_matrix(V, p, 2 * n, n) - grid_matrix(dV, p, 2 * n, n));
    store_row(S, p, T.topRows(n));
  }

  const FourierMap Ef = analyze(Et, grid, kmax, 2 * n, 1);
  const FourierMap Bf = analyze(Bt, grid, kmax, 2 * n, 2 * n);
  const Eigen::VectorXd Eavg = average(Ef);
  const Eigen::MatrixXd Bavg = Eigen::Map<const RowMatrix>(average(Bf).data(), 2 * n, 2 * n);

  // Zero-mean bottom parts and their cohomological solutions.
  GridField E2(points, n), B2(points, 2 * n * n);
  const GridField Efs = sample(without_average(Ef), grid);
  const GridField Bfs = sample(without_average(Bf), grid);
  for (Eigen::Index p = 0; p < points; ++p) {
    E2.row(p) = Efs.row(p).tail(n);
    store_row(B2, p, grid_matrix(Bfs, p, 2 * n, 2 * n).bottomRows(n));
  }
  SmallDivisorOptions sd = options.small_divisor;
  sd.average_tolerance = std::numeric_limits<double>::infinity();
  const GridField RE2 = sample(solve_small_divisor(without_average(analyze(E2, grid, kmax, n, 1)), omega, sd), grid);
  const GridField RB2 =
      sample(solve_small_divisor(without_average(analyze(B2, grid, kmax, n, 2 * n)), omega, sd), grid);

  // Averages of S R(E2) and S R(B2).
  Eigen::VectorXd sre = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd srb = Eigen::MatrixXd::Zero(n, 2 * n);
  for (Eigen::Index p = 0; p < points; ++p) {
    const Eigen::MatrixXd Sp = grid_matrix(S, p, n, n);
    sre += Sp * RE2.row(p).transpose();
    srb += Sp * grid_matrix(RB2, p, n, 2 * n);
  }
  sre /= static_cast<double>(points);
  srb /= static_cast<double>(points);

  Eigen::MatrixXd system(2 * n, 2 * n);
  system.topRows(n) = Bavg.topRows(n) + srb;
  system.bottomRows(n) = Bavg.bottomRows(n);
  Eigen::VectorXd rhs(2 * n);
  rhs.head(n) = -(Eavg.head(n) + sre);
  rhs.tail(n) = -Eavg.tail(n);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(system, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  rep.system_condition = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1) : std::numeric_limits<double>::infinity();
  if (rep.system_condition > options.lambda_condition_limit) {
    std::ostringstream msg;
    msg << "averaged lambda system has condition number " << rep.system_condition;
    throw Error(ErrorKind::SingularLambdaAverage, msg.str());
  }
  const Eigen::VectorXd dl = svd.solve(rhs);
  rep.delta_lambda = dl;

  // Bottom equation d_omega W2 = E2 + B2 dl, then top d_omega W1 = E1 + S W2 + B1 dl.
  GridField rhs2(points, n);
  for (Eigen::Index p = 0; p < points; ++p)
    rhs2.row(p) = (Et.row(p).tail(n).transpose() + grid_matrix(Bt, p, 2 * n, 2 * n).bottomRows(n) * dl).transpose();
  FourierMap r2 = analyze(rhs2, grid, kmax, n, 1);
  rep.rhs_average_bottom = average_max(r2);
  const FourierMap W2 = solve_small_divisor(without_average(r2), omega, options.small_divisor);
  const GridField W2s = sample(W2, grid);
  GridField rhs1(points, n);
  for (Eigen::Index p = 0; p < points; ++p)
    rhs1.row(p) = (Et.row(p).head(n).transpose() + grid_matrix(S, p, n, n) * W2s.row(p).transpose() +
                   grid_matrix(Bt, p, 2 * n, 2 * n).topRows(n) * dl)
                      .transpose();
  FourierMap r1 = analyze(rhs1, grid, kmax, n, 1);
  rep.rhs_average_top = average_max(r1);
  const FourierMap W1 = solve_small_divisor(without_average(r1), omega, options.small_divisor);
  const GridField W1s = sample(W1, grid);

  GridField dK(points, 2 * n);
  for (Eigen::Index p = 0; p < points; ++p) {
    Eigen::VectorXd w(2 * n);
    w << W1s.row(p).transpose(), W2s.row(p).transpose();
    dK.row(p) = (M[static_cast<std::size_t>(p)] * w).transpose();
  }
  AnalysisReport tail;
  const FourierMap correction = analyze(dK, grid, kmax, 2 * n, 1, &tail);
  rep.dropped_tail = tail.dropped_tail;
  rep.delta_K = strip_norm(correction, rho_out).value;

  out.K = K;
  out.K.periodic += correction;
  out.lambda = lambda + dl;
  out.error = error_function(H, out.lambda, out.K, omega);
  rep.e_out = strip_norm(out.error, rho_out).value;
  if (freq.gamma > 0.0)
    rep.c_obs = rep.e_out * std::pow(freq.gamma, 4.0) * std::pow(rho_in - rho_out, 4.0 * freq.sigma) /
                (rep.e_in * rep.e_in);
  if (!(rep.e_out < rep.e_in)) {
    std::ostringstream msg;
    msg << "residual went from " << rep.e_in << " to " << rep.e_out;
    throw Error(ErrorKind::StepDiverged, msg.str());
  }
  return out;
}

std::string DriftAudit::failures() const {
  std::ostringstream s;
  if (!K_ok) s << "||K - K0|| = " << K_drift << " exceeds r; ";
  if (!lambda_ok) s << "|lambda - lambda0| = " << lambda_drift << " not below r; ";
  if (!d_ok) s << "d = " << d << " exceeds d0 + beta = " << d0 + beta << "; ";
  if (!v_ok) s << "v = " << v << " exceeds v0 + beta = " << v0 + beta << "; ";
  if (!tau_ok) s << "tau = " << tau << " exceeds tau0 + beta = " << tau0 + beta << "; ";
  return s.str();
}

double analytic_strip(double rho, int m) { return rho * (0.5 + std::ldexp(1.0, -m - 1)); }

DriftAudit audit_solution(const HamiltonianFamily& H, const TorusSolution& sol, const Eigen::VectorXd& lambda0,
                          const TorusEmbedding& K0, const KamBudget& budget, double slack) {
  const double half = budget.rho / 2.0;
  DriftAudit a;
  a.beta = budget.beta_step;
  a.K_drift = strip_norm(sol.K.periodic - K0.periodic.with_kmax(sol.K.kmax()), half).value;
  a.lambda_drift = (sol.lambda - lambda0).cwiseAbs().maxCoeff();
  const NondegeneracyData start = compute_nondegeneracy(K0, H, lambda0, budget.rho);
  const NondegeneracyData end = compute_nondegeneracy(sol.K, H, sol.lambda, half);
  a.d0 = start.d;
  a.v0 = start.v;
  a.tau0 = start.tau;
  a.d = end.d;
  a.v = end.v;
  a.tau = end.tau;
  a.K_ok = a.K_drift <= budget.r + slack;
  a.lambda_ok = a.lambda_drift < budget.r;
  a.d_ok = a.d <= a.d0 + a.beta + slack;
  a.v_ok = a.v <= a.v0 + a.beta + slack;
  a.tau_ok = a.tau <= a.tau0 + a.beta + slack;
  return a;
}

TorusSolution solve_analytic(const HamiltonianFamily& H, const Eigen::VectorXd& lambda0, const TorusEmbedding& K0,
                             const FrequencyVector& omega, const KamBudget& budget, const SolveOptions& options) {
  TorusSolution sol;
  sol.initial_nondegeneracy = compute_nondegeneracy(K0, H, lambda0, budget.rho);
  const FourierMap e0 = error_function(H, lambda0, K0, omega.omega);
  sol.initial_ledger = check_smallness(budget, strip_norm(e0, budget.rho).value);

  TorusEmbedding K = K0;
  Eigen::VectorXd lambda = lambda0;
  FourierMap e = e0;
  double residual = strip_norm(e, budget.rho / 2.0).value;
  for (int m = 0; residual >= options.tol; ++m) {
    if (m >= options.max_iterations) {
      std::ostringstream msg;
      msg << "no convergence after " << m << " Newton steps; residual " << residual;
      throw Error(ErrorKind::BudgetExceeded, msg.str());
    }
    NewtonResult step = newton_step(H, lambda, K, omega, analytic_strip(budget.rho, m),
                                    analytic_strip(budget.rho, m + 1), options.newton);
    K = std::move(step.K);
    lambda = std::move(step.lambda);
    e = std::move(step.error);
    sol.history.push_back(step.report);
    residual = strip_norm(e, budget.rho / 2.0).value;
  }
  sol.K = K;
  sol.lambda = lambda;
  sol.rho_final = budget.rho / 2.0;
  sol.residual = strip_norm(e, sol.rho_final);
  sol.nondegeneracy = compute_nondegeneracy(K, H, lambda, sol.rho_final);
  sol.audit = audit_solution(H, sol, lambda0, K0, budget, options.audit_slack);
  if (options.enforce_drift && !sol.audit.passed())
    throw Error(ErrorKind::DriftViolation, sol.audit.failures());
  return sol;
}

double calibrate_c(const std::vector<StepReport>& history, double floor) {
  double c = 0.0;
  for (const auto& s : history)
    if (s.e_in > floor) c = std::max(c, s.c_obs);
  return c;
}

}  // namespace kam
