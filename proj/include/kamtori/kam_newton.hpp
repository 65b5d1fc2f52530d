#pragma once

// Analytic-case torus solver: error function, smallness ledger, the
// adapted-frame quasi-Newton step on (K, lambda) and its iteration on a
// shrinking sequence of strips.

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kamtori/diophantine.hpp"
#include "kamtori/fourier_torus.hpp"
#include "kamtori/hamiltonian.hpp"
#include "kamtori/nondegeneracy.hpp"

namespace kam {

struct KamBudget {
  double rho = 0.0;
  double delta0 = 0.0;
  double r = 0.0;
  double gamma = 0.0;
  double sigma = 0.0;
  double c = 1.0;
  double beta_step = 0.0;
  double beta_total = 0.0;
};

/// delta0 = min(1, rho/12) and both beta variants.
KamBudget make_budget(double rho, double r, double gamma, double sigma, double c);

struct SmallnessLedger {
  double e_norm = 0.0;
  double lhs_newton = 0.0;   ///< c gamma^-4 delta0^-4sigma |e|
  double lhs_drift = 0.0;    ///< c gamma^-2 delta0^-2sigma |e|
  bool newton_ok = false;    ///< lhs_newton < 1
  bool drift_ok = false;     ///< lhs_drift < r
  double margin_newton = 0.0;
  double margin_drift = 0.0;
  bool passed() const { return newton_ok && drift_ok; }
};

SmallnessLedger check_smallness(const KamBudget& budget, double e_norm);

/// theta -> J grad H_lambda(K(theta)) - d_omega K(theta), truncated at K's kmax.
FourierMap error_function(const HamiltonianFamily& H, const Eigen::VectorXd& lambda, const TorusEmbedding& K,
                          const Eigen::VectorXd& omega, AnalysisReport* report = nullptr);

struct StepReport {
  double rho_in = 0.0;
  double rho_out = 0.0;
  double e_in = 0.0;          ///< strip norm at rho_in
  double e_out = 0.0;         ///< strip norm of the new error at rho_out
  Eigen::VectorXd delta_lambda;
  double delta_K = 0.0;       ///< strip norm of the correction at rho_out
  double rhs_average_bottom = 0.0;  ///< averages left after the lambda solve
  double rhs_average_top = 0.0;
  double system_condition = 0.0;
  double c_obs = 0.0;         ///< e_out gamma^4 (rho_in - rho_out)^{4 sigma} / e_in^2
  double dropped_tail = 0.0;
};

struct NewtonOptions {
  SmallDivisorOptions small_divisor{1e-6, 1e-14};
  double lambda_condition_limit = 1e10;
};

struct NewtonResult {
  TorusEmbedding K;
  Eigen::VectorXd lambda;
  FourierMap error;  ///< error of the new pair
  StepReport report;
};

/// One quasi-Newton correction. `gamma` and `sigma` only enter the recorded C_obs.
NewtonResult newton_step(const HamiltonianFamily& H, const Eigen::VectorXd& lambda, const TorusEmbedding& K,
                         const FrequencyVector& omega, double rho_in, double rho_out,
                         const NewtonOptions& options = {});

struct DriftAudit {
  double K_drift = 0.0;        ///< ||K - K0||_{rho/2}
  double lambda_drift = 0.0;   ///< |lambda - lambda0|
  double d = 0.0, d0 = 0.0;
  double v = 0.0, v0 = 0.0;
  double tau = 0.0, tau0 = 0.0;
  double beta = 0.0;
  bool K_ok = false, lambda_ok = false, d_ok = false, v_ok = false, tau_ok = false;
  bool passed() const { return K_ok && lambda_ok && d_ok && v_ok && tau_ok; }
  std::string failures() const;
};

struct TorusSolution {
  TorusEmbedding K;
  Eigen::VectorXd lambda;
  StripNormValue residual;
  double rho_final = 0.0;
  NondegeneracyData nondegeneracy;
  NondegeneracyData initial_nondegeneracy;
  SmallnessLedger initial_ledger;
  DriftAudit audit;
  std::vector<StepReport> history;
  int iterations() const { return static_cast<int>(history.size()); }
};

struct SolveOptions {
  double tol = 1e-10;
  int max_iterations = 25;
  bool enforce_drift = true;
  double audit_slack = 1e-9;
  NewtonOptions newton;
};

/// Strip schedule rho_m = rho (1/2 + 2^{-m-1}).
double analytic_strip(double rho, int m);

/// Newton iteration from (K0, lambda0) until the residual on the final strip rho/2 is below tol.
TorusSolution solve_analytic(const HamiltonianFamily& H, const Eigen::VectorXd& lambda0, const TorusEmbedding& K0,
                             const FrequencyVector& omega, const KamBudget& budget, const SolveOptions& options = {});

/// Recomputes the conclusion bounds from scratch.
DriftAudit audit_solution(const HamiltonianFamily& H, const TorusSolution& sol, const Eigen::VectorXd& lambda0,
                          const TorusEmbedding& K0, const KamBudget& budget, double slack = 1e-9);

/// Largest observed C_obs over steps whose input residual sits above `floor`.
double calibrate_c(const std::vector<StepReport>& history, double floor = 1e-13);

}  // namespace kam
