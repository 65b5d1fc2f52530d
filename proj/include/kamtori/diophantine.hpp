#pragma once

#include <vector>

#include <Eigen/Dense>

namespace kam {

/// Frequency vector with Diophantine constants |k.omega| >= gamma |k|_1^{-sigma}.
/// The inequality carries no 2 pi; the cohomological solver's divisors are 2 pi k.omega.
struct FrequencyVector {
  Eigen::VectorXd omega;
  double gamma = 0.0;
  double sigma = 0.0;
  int verified_up_to = 0;  ///< 0 until a verification has run

  int n() const { return static_cast<int>(omega.size()); }
};

struct DiophantineVerdict {
  bool pass = false;
  std::vector<int> worst_k;   ///< minimiser of |k.omega| |k|_1^sigma
  double min_product = 0.0;   ///< min over 0 < |k|_1 <= kmax of |k.omega| |k|_1^sigma
  double margin = 0.0;        ///< min_product - gamma
  int verified_up_to = 0;
};

/// Checks the Diophantine inequality for every 0 < |k|_1 <= kmax.
DiophantineVerdict verify_diophantine(const Eigen::VectorXd& omega, double gamma, double sigma, int kmax);

/// Largest gamma admissible at this truncation: min over 0 < |k|_1 <= kmax of |k.omega| |k|_1^sigma.
double estimate_gamma(const Eigen::VectorXd& omega, double sigma, int kmax);

/// Builds a FrequencyVector with gamma verified (or estimated when gamma <= 0).
FrequencyVector make_frequency(const Eigen::VectorXd& omega, double gamma, double sigma, int kmax);

}  // namespace kam
