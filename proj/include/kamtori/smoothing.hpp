#pragma once

// Analytic approximation of finitely smooth families: a rectangle around the
// initial torus, a C-infinity cutoff, polynomial approximants and the
// decay-controlled choice of a sequence H^k with measured C^3 distances.

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "kamtori/fourier_torus.hpp"
#include "kamtori/hamiltonian.hpp"
#include "kamtori/separable.hpp"

namespace kam {

// ------------------------------------------------------------------ rectangle

struct RectangleDomain {
  int n = 0;
  Box phase;          ///< [a_i, b_i], i = 1..2n
  Box params;         ///< A(Q)
  ParameterDomain Q;
  double r = 0.0;
  double rho = 0.0;
  double margin = 0.0;
  /// Bounding box of the sampled image of K0 (real parts, widened by the imaginary parts).
  Box tube;
  /// Bounding box of K0 on the real torus.
  Box image;
  /// Worst fraction of the Monte-Carlo audit points of B_{3r}(K0) found outside; 0 when the invariant holds.
  double containment_defect = 0.0;

  int dim() const { return static_cast<int>(phase.lower.size() + params.lower.size()); }
  /// Phase box followed by the parameter box.
  Box full() const;
  /// Box holding B_radius(K0) (max norm) times A(Q); angles span one period.
  Box measurement_box(double radius) const;
};

/// Q is taken as its own rectangle when bounded and as the 2r-ball around lambda0 otherwise.
RectangleDomain build_rectangle(const TorusEmbedding& K0, double rho, double r, const ParameterDomain& Q,
                                const Eigen::VectorXd& lambda0, int audit_points = 10000,
                                unsigned seed = 12345);

// ------------------------------------------------------------------ cutoff

/// C-infinity step: 0 for t <= 0, 1 for t >= 1, built from exp(-1/t).
long double smooth_step(long double t);
/// Jet of smooth_step at t (with the chain factor of an affine argument left to the caller).
Jet smooth_step_jet(long double t);

/// phi(dist(z, K0(T^n))) with phi = 1 up to 2r and 0 from 5r/2 on (max norm). Flat tori use
/// the exact product over the actions; other tori a smooth l^16 distance to the real image,
/// whose inner radius 2r (2n)^{1/16} covers the max-norm ball B_2r.
class CutoffFunction {
 public:
  CutoffFunction(const TorusEmbedding& K0, double r, int samples_per_dim = 64);

  double r() const { return r_; }
  /// Distances at or below this give exactly 1.
  double inner_radius() const { return inner_; }
  /// Distances at or above this give exactly 0.
  double outer_radius() const { return outer_; }
  /// Flat tori have constant actions; the cutoff is then a product of p_j factors.
  bool is_flat() const { return flat_; }

  /// Max norm of p - p0 for flat tori, l^16 distance to the real image otherwise (angles mod 1).
  double distance(const Eigen::VectorXd& x) const;
  double profile(double dist) const;
  double operator()(const Eigen::VectorXd& x) const;
  /// Factor for the p_j axis of a flat torus; the product over j is the cutoff.
  UnivariatePtr action_factor(int j) const;

 private:
  /// Sampled upper bound and the index of the nearest sample.
  std::pair<double, Eigen::Index> nearest_sample(const Eigen::VectorXd& x) const;

  int n_;
  double r_;
  double inner_;
  double outer_;
  bool flat_ = false;
  Eigen::VectorXd p0_;
  TorusEmbedding K0_;
  FourierMap dk_;
  FourierMap d2k_;
  RowMatrix thetas_;
  RowMatrix tube_;
};

/// H times the cutoff. Values where the cutoff is 1 are bit-identical to H's.
HamiltonianFamily localize(const HamiltonianFamily& H, const CutoffFunction& psi, const RectangleDomain& rect);

// ------------------------------------------------------------------ approximation operators

/// Default degree cap for the polynomial approximants.
inline constexpr int kDefaultDegreeCap = 1 << 14;

/// Bernstein operator of degree m on [a, b] applied to f, with exact derivatives.
UnivariatePtr bernstein_factor(const UnivariatePtr& f, double a, double b, int m, int cap = kDefaultDegreeCap);

enum class TrigKernel {
  /// Positive means with multipliers C(2m, m+h)/C(2m, m), |h| <= m; saturate at O(1/m).
  Positive,
  /// Delayed means 2 F_{2m} - F_m: exact on degree <= m, error within 4x the best approximation.
  Delayed,
};

/// Trigonometric approximant of degree m of f on [a, a + L] extended with period L after
/// removing the slope s = (f(a + L) - f(a))/L: s (x - a) + T_m[f - s (x - a)], sampled on 8m nodes.
UnivariatePtr trig_factor(const UnivariatePtr& f, double a, double L, int m, TrigKernel kernel,
                          int cap = kDefaultDegreeCap);

/// Angle version: period 1 with the positive kernel.
UnivariatePtr periodic_factor(const UnivariatePtr& f, int m, int cap = kDefaultDegreeCap);

enum class SmoothingBackend {
  /// Positive trigonometric means on angles, Bernstein on the other axes.
  Bernstein,
  /// Delayed trigonometric means on every axis, the non-angle axes extended periodically over the
  /// rectangle. Meant for localized functions, which vanish near the rectangle's faces.
  Trigonometric,
};

SmoothingBackend parse_backend(const std::string& name);

/// Tensor-product Bernstein approximant of a sampled function on a box, evaluated with
/// exact partial derivatives. Dense: (m + 1)^dim samples.
class TensorBernstein {
 public:
  TensorBernstein(const std::function<double(const Eigen::VectorXd&)>& f, const Box& box, int degree,
                  int cap = kDefaultDegreeCap);

  int degree() const { return m_; }
  double value(const Eigen::VectorXd& x) const;
  double partial(const Eigen::VectorXd& x, const std::vector<int>& alpha) const;

 private:
  int dim_;
  int m_;
  Box box_;
  std::vector<double> samples_;
};

/// Applies the backend's per-axis operators over the rectangle. Affine factors pass through unchanged.
SeparableFunction smooth_separable(const SeparableFunction& f, const RectangleDomain& rect, int degree,
                                   SmoothingBackend backend = SmoothingBackend::Bernstein,
                                   int cap = kDefaultDegreeCap);

// ------------------------------------------------------------------ C^k distances

/// Max over an evenly spaced grid (endpoints included) of centered finite-difference
/// estimates of |d^alpha (f - g)|, |alpha| <= k. fd_step is relative to each axis length.
double measure_Ck_distance(const std::function<double(const Eigen::VectorXd&)>& f,
                           const std::function<double(const Eigen::VectorXd&)>& g, const Box& box, int k,
                           int points_per_axis = 32, double fd_step = 1e-4);

/// Same quantity computed from exact jets, for separable f and g (g may be null).
double measure_C3_separable(const SeparableFunction& f, const SeparableFunction* g, const Box& box,
                            int points_per_axis = 32);

// ------------------------------------------------------------------ sequence selection

struct SelectionOptions {
  int initial_degree = 2;
  int degree_cap = kDefaultDegreeCap;
  /// Length of the returned sequence (at least k0 + 1 entries are always produced).
  int levels = 8;
  int points_per_axis = 32;
  /// Measurement box radius in units of r.
  double box_radius = 2.0;
  SmoothingBackend backend = SmoothingBackend::Bernstein;
  /// Escalation stops once doubling the degree changes the distance by at most this fraction.
  double plateau_tolerance = 0.01;
};

struct CandidateRecord {
  int degree = 0;
  double distance = 0.0;  ///< measured |B - H|_{C^3}
};

struct Approximant {
  int k = 0;
  int degree = 0;
  std::shared_ptr<const SeparableFunction> f;
  HamiltonianFamily family;
  double distance = 0.0;     ///< measured |H^k - H|_{C^3}
  double threshold = 0.0;    ///< A (4^{-k})^{l + 2 sigma}
  double consecutive = 0.0;  ///< re-measured |H^k - H^{k+1}|_{C^3}
  bool accepted = false;     ///< distance met the threshold for level k
  bool repeated = false;     ///< copy of the last accepted approximant
};

struct ApproximantSequence {
  std::vector<Approximant> items;  ///< items[k - 1] = H^k
  std::vector<CandidateRecord> candidates;
  double A = 0.0;
  double exponent = 0.0;  ///< l + 2 sigma
  int k0 = 2;
  int achieved_levels = 0;
  /// Escalation ended on a distance plateau rather than at the degree cap.
  bool plateau = false;
  Box measurement_box;

  const Approximant& at(int k) const { return items.at(static_cast<std::size_t>(k - 1)); }
  int size() const { return static_cast<int>(items.size()); }
  /// True when every consecutive pair satisfies the envelope with the recorded A.
  bool envelope_holds() const;
};

/// Builds H^k = smooth_separable(target, degree_k) so that |H^k - target|_{C^3} <= A 4^{-k(l+2s)}
/// with margin for the consecutive bound, A the distance at the initial degree. Levels beyond the
/// degree cap or a distance plateau repeat the last accepted approximant.
ApproximantSequence select_subsequence(const HamiltonianFamily& target, const RectangleDomain& rect, int l,
                                       double sigma, double e0_norm, const SelectionOptions& options = {});

/// Constant sequence H^k = H for an analytic family.
ApproximantSequence identity_sequence(const HamiltonianFamily& H, int levels);

/// Smallest k0 >= 2 with A (4^{-(k0-1)})^{exponent} <= e0_norm.
int choose_k0(double A, double exponent, double e0_norm);

}  // namespace kam
