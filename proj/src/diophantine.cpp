#include "kamtori/diophantine.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include "kamtori/errors.hpp"

namespace kam {

namespace {

struct ShellScan {
  double min_product = std::numeric_limits<double>::infinity();
  std::vector<int> worst_k;
  bool exact_resonance = false;
  std::vector<int> resonant_k;
};

void check_sigma(int n, double sigma) {
  if (!(sigma > n - 1)) {
    std::ostringstream msg;
    msg << "sigma = " << sigma << " must exceed n - 1 = " << n - 1;
    throw Error(ErrorKind::InvalidSigma, msg.str());
  }
}

// Visits every k with |k|_1 == shell and k lexicographically positive (k and -k
// give the same |k.omega|).
void for_each_in_shell(int n, int shell, const std::function<void(const std::vector<int>&)>& visit) {
  std::vector<int> k(static_cast<std::size_t>(n), 0);
  std::function<void(int, int, bool)> rec = [&](int d, int remaining, bool positive) {
    if (d == n - 1) {
      if (remaining == 0) {
        k[static_cast<std::size_t>(d)] = 0;
        if (positive) visit(k);
        return;
      }
      k[static_cast<std::size_t>(d)] = remaining;
      visit(k);
      if (positive) {
        k[static_cast<std::size_t>(d)] = -remaining;
        visit(k);
      }
      return;
    }
    for (int a = positive ? -remaining : 0; a <= remaining; ++a) {
      k[static_cast<std::size_t>(d)] = a;
      rec(d + 1, remaining - std::abs(a), positive || a > 0);
    }
  };
  rec(0, shell, false);
}

ShellScan scan(const Eigen::VectorXd& omega, double sigma, int kmax) {
  const int n = static_cast<int>(omega.size());
  ShellScan result;
  for (int s = 1; s <= kmax; ++s) {
    double shell_min = std::numeric_limits<double>::infinity();
    std::vector<int> shell_arg;
    if (n == 2) {
      // Hot path: k = (a, +-(s - |a|)) with k lexicographically positive.
      const double w0 = omega(0), w1 = omega(1);
      for (int a = 0; a <= s; ++a) {
        const int b = s - a;
        const double base = a * w0;
        const double v1 = std::abs(base + b * w1);
        if (v1 < shell_min) {
          shell_min = v1;
          shell_arg = {a, b};
        }
        if (a > 0 && b > 0) {
          const double v2 = std::abs(base - b * w1);
          if (v2 < shell_min) {
            shell_min = v2;
            shell_arg = {a, -b};
          }
        }
      }
    } else {
      for_each_in_shell(n, s, [&](const std::vector<int>& k) {
        double kw = 0.0;
        for (int d = 0; d < n; ++d) kw += k[static_cast<std::size_t>(d)] * omega(d);
        const double v = std::abs(kw);
        if (v < shell_min) {
          shell_min = v;
          shell_arg = k;
        }
      });
    }
    if (shell_min == 0.0 && !result.exact_resonance) {
      result.exact_resonance = true;
      result.resonant_k = shell_arg;
    }
    const double product = shell_min * std::pow(static_cast<double>(s), sigma);
    if (product < result.min_product) {
      result.min_product = product;
      result.worst_k = shell_arg;
    }
  }
  return result;
}

}  // namespace

DiophantineVerdict verify_diophantine(const Eigen::VectorXd& omega, double gamma, double sigma, int kmax) {
  const int n = static_cast<int>(omega.size());
  check_sigma(n, sigma);
  if (kmax < 1) throw Error(ErrorKind::InvalidArgument, "K_max must be >= 1");
  const ShellScan s = scan(omega, sigma, kmax);
  DiophantineVerdict v;
  v.min_product = s.min_product;
  v.worst_k = s.worst_k;
  v.margin = s.min_product - gamma;
  v.pass = s.min_product >= gamma && !s.exact_resonance;
  v.verified_up_to = kmax;
  return v;
}

double estimate_gamma(const Eigen::VectorXd& omega, double sigma, int kmax) {
  const int n = static_cast<int>(omega.size());
  check_sigma(n, sigma);
  if (kmax < 1) throw Error(ErrorKind::InvalidArgument, "K_max must be >= 1");
  const ShellScan s = scan(omega, sigma, kmax);
  if (s.exact_resonance) {
    std::ostringstream msg;
    msg << "k.omega = 0 at k = (";
    for (std::size_t i = 0; i < s.resonant_k.size(); ++i) msg << (i ? "," : "") << s.resonant_k[i];
    msg << ")";
    throw Error(ErrorKind::ResonantFrequency, msg.str());
  }
  return s.min_product;
}

FrequencyVector make_frequency(const Eigen::VectorXd& omega, double gamma, double sigma, int kmax) {
  FrequencyVector fv{omega, gamma, sigma, 0};
  if (gamma <= 0.0) {
    fv.gamma = estimate_gamma(omega, sigma, kmax);
  } else {
    const auto verdict = verify_diophantine(omega, gamma, sigma, kmax);
    if (!verdict.pass) {
      std::ostringstream msg;
      msg << "gamma = " << gamma << " exceeds the truncated minimum " << verdict.min_product;
      throw Error(ErrorKind::ResonantFrequency, msg.str());
    }
  }
  fv.verified_up_to = kmax;
  return fv;
}

}  // namespace kam
