#pragma once

// Forward-mode derivative jet: value and the first three derivatives of a
// univariate function at a point, in extended precision.

#include <array>
#include <cmath>

namespace kam {

struct Jet {
  static constexpr int kOrder = 3;
  std::array<long double, kOrder + 1> d{};  ///< f, f', f'', f'''

  static Jet constant(long double c) { return Jet{{c, 0.0L, 0.0L, 0.0L}}; }
  static Jet variable(long double x) { return Jet{{x, 1.0L, 0.0L, 0.0L}}; }

  long double value() const { return d[0]; }
  long double operator[](int order) const { return d[static_cast<std::size_t>(order)]; }
};

inline Jet operator+(const Jet& a, const Jet& b) {
  return Jet{{a.d[0] + b.d[0], a.d[1] + b.d[1], a.d[2] + b.d[2], a.d[3] + b.d[3]}};
}
inline Jet operator-(const Jet& a, const Jet& b) {
  return Jet{{a.d[0] - b.d[0], a.d[1] - b.d[1], a.d[2] - b.d[2], a.d[3] - b.d[3]}};
}
inline Jet operator-(const Jet& a) { return Jet{{-a.d[0], -a.d[1], -a.d[2], -a.d[3]}}; }
inline Jet operator*(long double s, const Jet& a) {
  return Jet{{s * a.d[0], s * a.d[1], s * a.d[2], s * a.d[3]}};
}
inline Jet operator+(const Jet& a, long double c) { return Jet{{a.d[0] + c, a.d[1], a.d[2], a.d[3]}}; }

/// Leibniz rule.
inline Jet operator*(const Jet& a, const Jet& b) {
  return Jet{{a.d[0] * b.d[0], a.d[1] * b.d[0] + a.d[0] * b.d[1],
              a.d[2] * b.d[0] + 2.0L * a.d[1] * b.d[1] + a.d[0] * b.d[2],
              a.d[3] * b.d[0] + 3.0L * a.d[2] * b.d[1] + 3.0L * a.d[1] * b.d[2] + a.d[0] * b.d[3]}};
}

/// Composition g(f(x)) given the derivatives g, g', g'', g''' at f(x) (Faa di Bruno).
inline Jet compose(const std::array<long double, 4>& g, const Jet& f) {
  const long double f1 = f.d[1], f2 = f.d[2], f3 = f.d[3];
  return Jet{{g[0], g[1] * f1, g[2] * f1 * f1 + g[1] * f2,
              g[3] * f1 * f1 * f1 + 3.0L * g[2] * f1 * f2 + g[1] * f3}};
}

inline Jet sin(const Jet& f) {
  const long double s = std::sin(f.d[0]), c = std::cos(f.d[0]);
  return compose({s, c, -s, -c}, f);
}
inline Jet cos(const Jet& f) {
  const long double s = std::sin(f.d[0]), c = std::cos(f.d[0]);
  return compose({c, -s, -c, s}, f);
}
inline Jet exp(const Jet& f) {
  const long double e = std::exp(f.d[0]);
  return compose({e, e, e, e}, f);
}
inline Jet reciprocal(const Jet& f) {
  const long double v = 1.0L / f.d[0];
  return compose({v, -v * v, 2.0L * v * v * v, -6.0L * v * v * v * v}, f);
}
inline Jet operator/(const Jet& a, const Jet& b) { return a * reciprocal(b); }

}  // namespace kam
