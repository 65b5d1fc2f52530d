#pragma once

// Shared fixtures and independent oracles for the unit tests.

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "kamtori/fourier_torus.hpp"

namespace kam::testing {

inline constexpr double kGolden = 1.6180339887498948482;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Random real map with coefficients decaying like decay^{|k|_1}.
inline FourierMap random_map(int n, int m, int kmax, std::mt19937_64& rng, double decay = 0.5,
                             bool zero_average = false) {
  std::normal_distribution<double> normal(0.0, 1.0);
  FourierMap map(n, m, 1, kmax);
  const auto& modes = map.modes();
  for (std::size_t i = 0; i < modes.size(); ++i) {
    if (!modes.is_canonical(i)) continue;
    const double scale = std::pow(decay, modes.l1(i));
    for (int c = 0; c < m; ++c) {
      Complex v(normal(rng) * scale, normal(rng) * scale);
      if (i == modes.zero()) v = zero_average ? Complex(0.0, 0.0) : Complex(v.real(), 0.0);
      map.set(modes.index(i), c, v);
    }
  }
  return map;
}

/// Direct synthesis sum_k c_k exp(2 pi i k.theta), written independently of kam::eval.
inline std::complex<double> direct_synthesis(const FourierMap& map, int component,
                                             const Eigen::VectorXd& theta) {
  std::complex<double> sum(0.0, 0.0);
  const auto& modes = map.modes();
  for (std::size_t i = 0; i < modes.size(); ++i) {
    double arg = 0.0;
    for (int d = 0; d < map.n(); ++d) arg += modes.index(i)[static_cast<std::size_t>(d)] * theta(d);
    sum += map.at(i, component) * std::complex<double>(std::cos(kTwoPi * arg), std::sin(kTwoPi * arg));
  }
  return sum;
}

}  // namespace kam::testing
