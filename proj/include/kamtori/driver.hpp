#pragma once

// Finitely smooth case: a first analytic solve for an approximant H^{k0},
// then one solve per approximant on strips that halve while the error budget
// r_k decays geometrically, with the inductive ledger checked at every step.

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "kamtori/diophantine.hpp"
#include "kamtori/fourier_torus.hpp"
#include "kamtori/hamiltonian.hpp"
#include "kamtori/kam_newton.hpp"
#include "kamtori/smoothing.hpp"

namespace kam {

/// rho_k = rho / 2^{k-1}, delta_k = rho_k / 12, r_k = r (4^{-(l+sigma)})^{k-1}, k >= 1.
struct IterationSchedule {
  double rho = 0.0;
  double r = 0.0;
  int l = 0;
  double sigma = 0.0;

  IterationSchedule() = default;
  IterationSchedule(double rho, double r, int l, double sigma);

  double ratio() const;  ///< 4^{-(l+sigma)}
  double rho_k(int k) const;
  double delta_k(int k) const;
  double r_k(int k) const;
  /// r sum_{i<k} ratio^i, the bound on the parameter and torus drift at step k.
  double drift_bound(int k) const;
  /// sum_{j>k} r_j.
  double tail_after(int k) const;
  /// Envelope r (4^{-l})^{k-1} for the increment K_k - K_{k-1}.
  double increment_envelope(int k) const;
};

/// c_k = c_poly (1 + mu)(1 + d)(1 + v)(1 + tau): a monotone polynomial in the four scalars.
struct ConstantModel {
  double c_poly = 1.0;
  double operator()(double mu, double d, double v, double tau) const {
    return c_poly * (1.0 + mu) * (1.0 + d) * (1.0 + v) * (1.0 + tau);
  }
};

/// The barred constants mu = mu0 + 1, d = d0 + beta, v = v0 + beta, tau = tau0 + beta + 1 and c.
struct BarredConstants {
  double mu = 0.0, d = 0.0, v = 0.0, tau = 0.0, beta = 0.0, c = 0.0;
};

struct LedgerEntry {
  std::string name;
  double measured = 0.0;
  double bound = 0.0;
  bool strict = false;  ///< measured < bound rather than <=
  bool passed() const { return strict ? measured < bound : measured <= bound; }
  double margin() const { return bound - measured; }
};

struct IterationState {
  int k = 0;                ///< 1 for the first step
  int approximant = 0;      ///< index of H^k in the selected sequence
  Eigen::VectorXd lambda;   ///< lambda_k
  TorusEmbedding K;         ///< K_k
  double e_norm = 0.0;      ///< ||e_k||_{rho_k} before the solve
  double residual = 0.0;    ///< residual of the solve for H^k on its final strip
  int iterations = 0;
  double mu = 0.0, d = 0.0, v = 0.0, tau = 0.0, c = 0.0;
  double psi_norm = 0.0;        ///< |<Psi_{k-1}>|
  double neumann_product = 0.0; ///< |<Lambda>^{-1} <Psi>| (row-sum norm)
  double tau_previous = 0.0;    ///< |<Lambda^{k-1}_{k-1}>^{-1}|
  double hamiltonian_increment = 0.0;  ///< |H^k - H^{k-1}|_{C^3}, or |H^{k0} - H| at k = 1
  double increment = 0.0;         ///< ||K_k - K_{k-1}||_{rho / 4^k}
  double increment_strip = 0.0;   ///< ||K_k - K_{k-1}||_{rho_{k+1}}
  double lambda_increment = 0.0;  ///< |lambda_k - lambda_{k-1}|
  double dk_increment = 0.0;      ///< ||DK_k - DK_{k-1}||_0, a majorant on the real torus
  std::vector<LedgerEntry> ledger;

  bool passed() const;
  const LedgerEntry* find(const std::string& name) const;
};

struct DriverOptions {
  /// Solve constant; <= 0 calibrates it from a probe solve of H.
  double c = 0.0;
  double c_safety = 2.0;
  /// Smoothness used for the schedule when H is analytic.
  int l = 4;
  int k_stop = 12;
  double stop_tolerance = 1e-12;
  double tol = 1e-10;
  double tol_floor = 1e-13;
  ParameterDomain Q = ParameterDomain::unbounded(0);
  SelectionOptions selection = [] {
    SelectionOptions s;
    s.backend = SmoothingBackend::Trigonometric;
    return s;
  }();
  SolveOptions solve;
  int residual_points = 512;  ///< real-torus samples per dimension for the final residual
};

/// Everything step_one and the inductive steps share.
struct DriverContext {
  explicit DriverContext(HamiltonianFamily family) : H(std::move(family)) {}

  HamiltonianFamily H;
  std::optional<HamiltonianFamily> localized;
  FrequencyVector omega;
  TorusEmbedding K0;
  Eigen::VectorXd lambda0;
  IterationSchedule schedule;
  RectangleDomain rect;
  ApproximantSequence sequence;
  ConstantModel model;
  BarredConstants barred;
  double c_obs = 0.0;
  double e0_norm = 0.0;
  double mu0 = 0.0, d0 = 0.0, v0 = 0.0, tau0 = 0.0;
  DriverOptions options;

  /// H^k of the re-indexed sequence (k = 1 is H^{k0}); past the end the last entry repeats.
  const Approximant& approximant(int k) const;
  int approximant_index(int k) const;
};

/// Validates the hypotheses on e0, selects the approximants and calibrates c.
DriverContext prepare_driver(const HamiltonianFamily& H, const TorusEmbedding& K0, const Eigen::VectorXd& lambda0,
                             const FrequencyVector& omega, double rho, double r,
                             const DriverOptions& options = {});

struct StepOneReport {
  int k0 = 0;
  std::vector<LedgerEntry> conditions;  ///< approximation, constant and smallness conditions, the Neumann test and the Psi bound
  int skipped = 0;                      ///< approximants rejected before k0
};

/// First step: advances k0 until the approximation conditions and the Neumann test hold,
/// checks the constant and smallness conditions and solves.
IterationState step_one(DriverContext& ctx, StepOneReport* report = nullptr);

/// Step k >= 2 from the previous state.
IterationState inductive_step(const DriverContext& ctx, const IterationState& previous);

struct DriveResult {
  IterationSchedule schedule;
  TorusEmbedding K;
  Eigen::VectorXd lambda;
  std::vector<IterationState> states;
  StepOneReport first;
  int k0 = 0;
  double tail = 0.0;             ///< sum_{k > last} r_k
  double c3_tail = 0.0;          ///< |H^{last} - H|_{C^3}
  double true_residual = 0.0;    ///< max over the real torus against the original H
  double residual_bound = 0.0;   ///< 10 (c3_tail + r_last)
  /// Every DK increment on the real torus within the Cauchy bound ||K_k - K_{k-1}||_{rho/4^k} 4^k / (e rho).
  bool c1_certified = false;
  double c_poly = 0.0;
  double c = 0.0;
  double c_obs = 0.0;
  double A = 0.0;
  int achieved_levels = 0;
  bool terminated_at_fixed_point = false;
};

DriveResult drive(const HamiltonianFamily& H, const TorusEmbedding& K0, const Eigen::VectorXd& lambda0,
                  const FrequencyVector& omega, double rho, double r, const DriverOptions& options = {});

/// max over a real-torus grid of |J grad H_lambda(K(theta)) - d_omega K(theta)| without band truncation.
double real_torus_residual(const HamiltonianFamily& H, const Eigen::VectorXd& lambda, const TorusEmbedding& K,
                           const Eigen::VectorXd& omega, int points_per_dim);

/// Ledger table: k, rho_k, delta_k, r_k, ||e_k||, margins of the five inductive conditions, increments.
void write_ledger_csv(std::ostream& out, const DriveResult& result);

}  // namespace kam
