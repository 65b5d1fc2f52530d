#include "kamtori/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <tuple>
#include <unsupported/Eigen/FFT>
#include <utility>

#include "kamtori/errors.hpp"

namespace kam {

namespace {

constexpr long double kTwoPiL = 2.0L * std::numbers::pi_v<long double>;

double wrap_angle(double d) { return d - std::round(d); }

constexpr double kDistancePower = 16.0;

// Forward DFT of real samples. Eigen's FFT builds its twiddles in double, which caps the
// accuracy of long double spectra, so power-of-two sizes use a radix-2 pass with exact twiddles.
std::vector<std::complex<long double>> forward_spectrum(const std::vector<long double>& u) {
  const std::size_t N = u.size();
  if (N < 2 || (N & (N - 1)) != 0) {
    Eigen::FFT<long double> fft;
    std::vector<std::complex<long double>> out;
    fft.fwd(out, u);
    return out;
  }
  std::vector<std::complex<long double>> a(u.begin(), u.end());
  for (std::size_t i = 1, j = 0; i < N; ++i) {
    std::size_t bit = N >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  std::vector<std::complex<long double>> w(N / 2);
  for (std::size_t k = 0; k < N / 2; ++k) {
    const long double t = -kTwoPiL * static_cast<long double>(k) / static_cast<long double>(N);
    w[k] = {std::cos(t), std::sin(t)};
  }
  for (std::size_t len = 2; len <= N; len <<= 1) {
    const std::size_t stride = N / len;
    for (std::size_t i = 0; i < N; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<long double> t = w[k * stride] * a[i + k + len / 2];
        a[i + k + len / 2] = a[i + k] - t;
        a[i + k] += t;
      }
    }
  }
  return a;
}

void check_degree(int m, int cap) {
  if (m < 1) throw Error(ErrorKind::InvalidArgument, "approximant degree must be >= 1");
  if (m > cap)
    throw Error(ErrorKind::DegreeOverflow,
                "degree " + std::to_string(m) + " exceeds the cap " + std::to_string(cap));
}

bool is_affine(const UnivariatePtr& f) {
  const int deg = f->polynomial_degree();
  return deg == 0 || deg == 1;
}

// sum_j c[j] b_{j,n}(t) for the Bernstein basis of degree n, summed outward from the
// mode until the weights underflow.
long double bernstein_sum(const long double* c, int n, long double t) {
  if (n == 0 || t <= 0.0L) return c[0];
  if (t >= 1.0L) return c[n];
  const int mode = std::clamp(static_cast<int>(std::floor((n + 1) * t)), 0, n);
  const long double log_peak = std::lgamma(static_cast<long double>(n) + 1.0L) -
                               std::lgamma(static_cast<long double>(mode) + 1.0L) -
                               std::lgamma(static_cast<long double>(n - mode) + 1.0L) + mode * std::log(t) +
                               (n - mode) * std::log1p(-t);
  const long double peak = std::exp(log_peak);
  const long double ratio = t / (1.0L - t);
  constexpr long double kNegligible = 1e-40L;
  long double sum = c[mode] * peak;
  long double b = peak;
  for (int j = mode + 1; j <= n; ++j) {
    b *= static_cast<long double>(n - j + 1) / j * ratio;
    sum += c[j] * b;
    if (b < kNegligible) break;
  }
  b = peak;
  for (int j = mode - 1; j >= 0; --j) {
    b *= static_cast<long double>(j + 1) / (n - j) / ratio;
    sum += c[j] * b;
    if (b < kNegligible) break;
  }
  return sum;
}

class BernsteinUnivariate final : public Univariate {
 public:
  BernsteinUnivariate(const UnivariatePtr& f, double a, double b, int m) : a_(a), length_(b - a), m_(m) {
    std::vector<long double> s(static_cast<std::size_t>(m) + 1);
    for (int j = 0; j <= m; ++j) s[static_cast<std::size_t>(j)] = (*f)(a + (b - a) * static_cast<long double>(j) / m);
    diffs_[0] = std::move(s);
    for (int r = 1; r <= Jet::kOrder && r <= m; ++r) {
      const auto& prev = diffs_[static_cast<std::size_t>(r - 1)];
      std::vector<long double> d(prev.size() - 1);
      for (std::size_t j = 0; j < d.size(); ++j) d[j] = prev[j + 1] - prev[j];
      diffs_[static_cast<std::size_t>(r)] = std::move(d);
    }
  }

  Jet jet(long double x) const override {
    long double t = (x - a_) / length_;
    constexpr long double kSlack = 1e-12L;
    if (t < -kSlack || t > 1.0L + kSlack)
      throw Error(ErrorKind::DomainViolation, "Bernstein factor evaluated outside its interval");
    t = std::clamp(t, 0.0L, 1.0L);
    Jet out;
    long double falling = 1.0L;
    for (int r = 0; r <= Jet::kOrder; ++r) {
      if (r > m_) break;
      if (r > 0) falling *= static_cast<long double>(m_ - r + 1) / length_;
      out.d[static_cast<std::size_t>(r)] = falling * bernstein_sum(diffs_[static_cast<std::size_t>(r)].data(), m_ - r, t);
    }
    return out;
  }

 private:
  long double a_;
  long double length_;
  int m_;
  std::array<std::vector<long double>, Jet::kOrder + 1> diffs_;
};

class TrigUnivariate final : public Univariate {
 public:
  TrigUnivariate(long double a, long double period, long double slope, long double mean,
                 std::vector<std::complex<long double>> coeffs)
      : a_(a), period_(period), slope_(slope), mean_(mean), coeffs_(std::move(coeffs)) {}

  Jet jet(long double x) const override {
    const long double y = x - a_;
    Jet out{{slope_ * y + mean_, slope_, 0.0L, 0.0L}};
    const long double phase = kTwoPiL * y / period_;
    const std::complex<long double> step(std::cos(phase), std::sin(phase));
    std::complex<long double> rot(1.0L, 0.0L);
    for (std::size_t i = 0; i < coeffs_.size(); ++i) {
      const long double h = static_cast<long double>(i + 1);
      if (i % 64 == 0) rot = {std::cos(h * phase), std::sin(h * phase)};
      else rot *= step;
      // 2 Re(a_h (2 pi i h / L)^r e^{2 pi i h y / L})
      std::complex<long double> term = 2.0L * coeffs_[i] * rot;
      const std::complex<long double> factor(0.0L, kTwoPiL * h / period_);
      for (int r = 0; r <= Jet::kOrder; ++r) {
        out.d[static_cast<std::size_t>(r)] += term.real();
        term *= factor;
      }
    }
    return out;
  }

 private:
  long double a_;
  long double period_;
  long double slope_;
  long double mean_;
  std::vector<std::complex<long double>> coeffs_;
};

class CutoffFactor final : public Univariate {
 public:
  CutoffFactor(long double center, long double r) : center_(center), r_(r) {}
  Jet jet(long double p) const override {
    const long double offset = p - center_;
    const long double dist = std::abs(offset);
    if (dist <= 2.0L * r_) return Jet::constant(1.0L);
    if (dist >= 2.5L * r_) return Jet::constant(0.0L);
    // argument u = (5r/2 - |p - c|) / (r/2), du/dp = -sign(offset) 2 / r
    const Jet s = smooth_step_jet((2.5L * r_ - dist) / (0.5L * r_));
    const long double du = (offset > 0 ? -2.0L : 2.0L) / r_;
    return Jet{{s.d[0], s.d[1] * du, s.d[2] * du * du, s.d[3] * du * du * du}};
  }

 private:
  long double center_;
  long double r_;
};

// Centered finite-difference stencils (offset, weight) for derivative orders 0..3, step 1.
const std::vector<std::pair<int, double>>& stencil(int order) {
  static const std::array<std::vector<std::pair<int, double>>, 4> table{{
      {{0, 1.0}},
      {{-1, -0.5}, {1, 0.5}},
      {{-1, 1.0}, {0, -2.0}, {1, 1.0}},
      {{-2, -0.5}, {-1, 1.0}, {1, -1.0}, {2, 0.5}},
  }};
  return table.at(static_cast<std::size_t>(order));
}

long double binomial(int n, int k) {
  return std::exp(std::lgamma(n + 1.0L) - std::lgamma(k + 1.0L) - std::lgamma(n - k + 1.0L));
}

// Weights w_j with sum_j f_j w_j = d^r/dt^r B_m[f](t).
std::vector<long double> tensor_weights(int m, int r, long double t) {
  std::vector<long double> w(static_cast<std::size_t>(m) + 1, 0.0L);
  if (r > m) return w;
  const int n = m - r;
  std::vector<long double> basis(static_cast<std::size_t>(n) + 1);
  for (int j = 0; j <= n; ++j)
    basis[static_cast<std::size_t>(j)] = binomial(n, j) * std::pow(t, j) * std::pow(1.0L - t, n - j);
  long double falling = 1.0L;
  for (int i = 0; i < r; ++i) falling *= m - i;
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= r; ++i) {
      const long double sign = ((r - i) % 2 == 0) ? 1.0L : -1.0L;
      w[static_cast<std::size_t>(j + i)] += falling * sign * binomial(r, i) * basis[static_cast<std::size_t>(j)];
    }
  return w;
}

}  // namespace

// ------------------------------------------------------------------ rectangle

Box RectangleDomain::full() const {
  const auto p = phase.lower.size(), d = params.lower.size();
  Box b{Eigen::VectorXd(p + d), Eigen::VectorXd(p + d)};
  b.lower << phase.lower, params.lower;
  b.upper << phase.upper, params.upper;
  return b;
}

Box RectangleDomain::measurement_box(double radius) const {
  Box b = full();
  for (int i = 0; i < 2 * n; ++i) {
    if (i < n) {
      b.lower(i) = 0.0;
      b.upper(i) = 1.0;
    } else {
      b.lower(i) = image.lower(i) - radius;
      b.upper(i) = image.upper(i) + radius;
    }
  }
  return b;
}

RectangleDomain build_rectangle(const TorusEmbedding& K0, double rho, double r, const ParameterDomain& Q,
                                const Eigen::VectorXd& lambda0, int audit_points, unsigned seed) {
  if (!(r > 0.0)) throw Error(ErrorKind::InvalidArgument, "rectangle radius r must be positive");
  const int n = K0.n();
  RectangleDomain rect;
  rect.n = n;
  rect.r = r;
  rect.rho = rho;
  rect.margin = r / 10.0;
  const double inf = std::numeric_limits<double>::infinity();
  rect.tube = {Eigen::VectorXd::Constant(2 * n, inf), Eigen::VectorXd::Constant(2 * n, -inf)};
  rect.image = rect.tube;

  const TorusGrid grid(n, n == 1 ? 64 : 24);
  const int levels = 3;
  int offsets = 1;
  for (int j = 0; j < n; ++j) offsets *= levels;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const Eigen::VectorXd theta = grid.theta(g);
    for (int o = 0; o < offsets; ++o) {
      Eigen::VectorXcd z(n);
      int code = o;
      bool real = true;
      for (int j = 0; j < n; ++j) {
        const double y = rho * ((code % levels) - 1);
        real = real && y == 0.0;
        code /= levels;
        z(j) = Complex(theta(j), y);
      }
      const Eigen::VectorXcd k = K0.eval(z);
      for (int i = 0; i < 2 * n; ++i) {
        const double lo = k(i).real() - std::abs(k(i).imag());
        const double hi = k(i).real() + std::abs(k(i).imag());
        rect.tube.lower(i) = std::min(rect.tube.lower(i), lo);
        rect.tube.upper(i) = std::max(rect.tube.upper(i), hi);
        if (real) {
          rect.image.lower(i) = std::min(rect.image.lower(i), k(i).real());
          rect.image.upper(i) = std::max(rect.image.upper(i), k(i).real());
        }
      }
    }
  }
  const double pad = 3.0 * r + rect.margin;
  rect.phase = {rect.tube.lower.array() - pad, rect.tube.upper.array() + pad};

  const bool bounded = Q.rectangle.lower.allFinite() && Q.rectangle.upper.allFinite();
  rect.Q = bounded ? Q : ParameterDomain::ball(lambda0, 2.0 * r);
  rect.params = rect.Q.rectangle;

  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0), ball(-3.0 * r, 3.0 * r);
  int outside = 0;
  for (int s = 0; s < audit_points; ++s) {
    Eigen::VectorXd theta(n);
    for (int j = 0; j < n; ++j) theta(j) = unit(rng);
    Eigen::VectorXd z = K0.eval_real(theta);
    for (int i = 0; i < 2 * n; ++i) z(i) += ball(rng);
    if (!rect.phase.contains(z)) ++outside;
  }
  rect.containment_defect = audit_points > 0 ? static_cast<double>(outside) / audit_points : 0.0;
  return rect;
}

// ------------------------------------------------------------------ cutoff

Jet smooth_step_jet(long double t) {
  if (t <= 0.0L) return Jet::constant(0.0L);
  if (t >= 1.0L) return Jet::constant(1.0L);
  const Jet x = Jet::variable(t);
  const Jet f = exp(-reciprocal(x));
  const Jet g = exp(-reciprocal(Jet::constant(1.0L) - x));
  return f / (f + g);
}

long double smooth_step(long double t) { return smooth_step_jet(t).value(); }

CutoffFunction::CutoffFunction(const TorusEmbedding& K0, double r, int samples_per_dim)
    : n_(K0.n()), r_(r), inner_(2.0 * r), outer_(2.5 * r), K0_(K0) {
  if (!(r > 0.0)) throw Error(ErrorKind::InvalidArgument, "cutoff radius r must be positive");
  const int n = n_;
  const FourierMap& P = K0.periodic;
  flat_ = true;
  for (std::size_t mode = 0; mode < P.modes().size() && flat_; ++mode) {
    if (mode == P.modes().zero()) continue;
    for (int i = n; i < 2 * n; ++i)
      if (P.at(mode, i) != Complex(0.0, 0.0)) flat_ = false;
  }
  p0_ = average(P).tail(n);
  if (flat_) return;

  inner_ = 2.0 * r * std::pow(2.0 * n, 1.0 / kDistancePower);
  if (inner_ >= outer_) throw Error(ErrorKind::InvalidArgument, "torus dimension too large for the smooth cutoff");
  dk_ = K0.jacobian();
  d2k_ = jacobian(dk_.reshaped(2 * n * n, 1));
  const TorusGrid grid(n, samples_per_dim);
  thetas_.resize(static_cast<Eigen::Index>(grid.size()), n);
  tube_.resize(static_cast<Eigen::Index>(grid.size()), 2 * n);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const Eigen::VectorXd theta = grid.theta(g);
    thetas_.row(static_cast<Eigen::Index>(g)) = theta.transpose();
    tube_.row(static_cast<Eigen::Index>(g)) = K0.eval_real(theta).transpose();
  }
}

std::pair<double, Eigen::Index> CutoffFunction::nearest_sample(const Eigen::VectorXd& x) const {
  double best = std::numeric_limits<double>::infinity();
  Eigen::Index arg = 0;
  for (Eigen::Index row = 0; row < tube_.rows(); ++row) {
    double d = 0.0;
    for (int i = 0; i < 2 * n_ && d < best; ++i) {
      double diff = x(i) - tube_(row, i);
      if (i < n_) diff = wrap_angle(diff);
      d = std::max(d, std::abs(diff));
    }
    if (d < best) {
      best = d;
      arg = row;
    }
  }
  return {best, arg};
}

double CutoffFunction::distance(const Eigen::VectorXd& x) const {
  if (flat_) return (x.segment(n_, n_) - p0_).cwiseAbs().maxCoeff();
  const int n = n_;
  auto offset = [&](const Eigen::VectorXd& theta) {
    Eigen::VectorXd d = x - K0_.eval_real(theta);
    for (int i = 0; i < n; ++i) d(i) = wrap_angle(d(i));
    return d;
  };
  auto lp = [](const Eigen::VectorXd& d) {
    const double s = d.cwiseAbs().maxCoeff();
    if (s == 0.0) return 0.0;
    return s * std::pow((d / s).array().pow(kDistancePower).sum(), 1.0 / kDistancePower);
  };
  const Eigen::Index row = nearest_sample(x).second;
  Eigen::VectorXd theta = thetas_.row(row).transpose();
  Eigen::VectorXd d = offset(theta);
  double best = lp(d);
  // Newton on F(theta) = sum_i (d_i/s)^P, s = max|d_i| frozen per iteration.
  constexpr int kMaxIter = 40;
  for (int it = 0; it < kMaxIter && best > 0.0; ++it) {
    const double s = d.cwiseAbs().maxCoeff();
    const Eigen::VectorXd u = d / s;
    const Eigen::VectorXd dk = eval_real(dk_, theta);
    const Eigen::VectorXd d2k = eval_real(d2k_, theta);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < 2 * n; ++i) {
      const Eigen::VectorXd row_i = dk.segment(i * n, n);
      const double u14 = std::pow(u(i), kDistancePower - 2);
      const double u15 = u14 * u(i);
      g -= kDistancePower / s * u15 * row_i;
      h += kDistancePower * (kDistancePower - 1) / (s * s) * u14 * row_i * row_i.transpose();
      for (int j = 0; j < n; ++j)
        for (int l = 0; l < n; ++l) h(j, l) -= kDistancePower / s * u15 * d2k((i * n + j) * n + l);
    }
    Eigen::VectorXd step = -h.ldlt().solve(g);
    if (!step.allFinite()) break;
    // Backtrack until the distance does not increase.
    double t = 1.0;
    bool moved = false;
    for (int b = 0; b < 30; ++b, t *= 0.5) {
      const Eigen::VectorXd trial = theta + t * step;
      const Eigen::VectorXd dt = offset(trial);
      const double v = lp(dt);
      if (v <= best) {
        moved = v < best;
        theta = trial;
        d = dt;
        best = v;
        break;
      }
    }
    if (!moved || (t * step).cwiseAbs().maxCoeff() < 1e-15) break;
  }
  return best;
}

double CutoffFunction::profile(double dist) const {
  return static_cast<double>(smooth_step((outer_ - dist) / (outer_ - inner_)));
}

double CutoffFunction::operator()(const Eigen::VectorXd& x) const {
  if (flat_) {
    long double v = 1.0L;
    for (int j = 0; j < n_; ++j) v *= action_factor(j)->jet(x(n_ + j)).value();
    return static_cast<double>(v);
  }
  // A sample within the max-norm ball of radius 2r certifies the value 1 without a solve.
  if (nearest_sample(x).first <= 2.0 * r_) return 1.0;
  return profile(distance(x));
}

UnivariatePtr CutoffFunction::action_factor(int j) const {
  if (!flat_) throw Error(ErrorKind::InvalidArgument, "product cutoff needs a flat torus");
  return std::make_shared<CutoffFactor>(p0_(j), r_);
}

HamiltonianFamily localize(const HamiltonianFamily& H, const CutoffFunction& psi, const RectangleDomain& rect) {
  const int n = H.n();
  const std::string name = H.name() + "*cutoff";
  if (psi.is_flat() && H.separable()) {
    auto f = std::make_shared<SeparableFunction>(*H.separable());
    for (int j = 0; j < n; ++j) *f = f->multiplied_by(n + j, psi.action_factor(j));
    return HamiltonianFamily::from_separable(name, n, H.param_dim(), f, H.smoothness_class())
        .with_domains(rect.phase, rect.Q);
  }
  HamiltonianFamily::Evaluators ev;
  ev.value = [H, psi](const Eigen::VectorXd& x, const Eigen::VectorXd& l) {
    const double c = psi(x);
    if (c == 0.0) return 0.0;
    const double v = H.value(x, l);
    return c == 1.0 ? v : c * v;
  };
  return HamiltonianFamily(name, n, H.param_dim(), std::move(ev), H.smoothness_class())
      .with_domains(rect.phase, rect.Q);
}

// ------------------------------------------------------------------ approximation operators

UnivariatePtr bernstein_factor(const UnivariatePtr& f, double a, double b, int m, int cap) {
  check_degree(m, cap);
  if (!(b > a)) throw Error(ErrorKind::InvalidArgument, "Bernstein interval must have b > a");
  if (is_affine(f)) return f;
  return std::make_shared<BernsteinUnivariate>(f, a, b, m);
}

UnivariatePtr trig_factor(const UnivariatePtr& f, double a, double L, int m, TrigKernel kernel, int cap) {
  check_degree(m, cap);
  if (!(L > 0.0)) throw Error(ErrorKind::InvalidArgument, "trigonometric period must be positive");
  if (is_affine(f)) return f;
  const long double slope = ((*f)(a + static_cast<long double>(L)) - (*f)(a)) / L;
  const int top = kernel == TrigKernel::Positive ? m : 2 * m - 1;
  const int nodes = 8 * m;
  std::vector<long double> u(static_cast<std::size_t>(nodes));
  long double scale = 0.0L;
  for (int j = 0; j < nodes; ++j) {
    const long double y = static_cast<long double>(L) * j / nodes;
    u[static_cast<std::size_t>(j)] = (*f)(a + y) - slope * y;
    scale = std::max(scale, std::abs(u[static_cast<std::size_t>(j)]));
  }
  const std::vector<std::complex<long double>> spectrum = forward_spectrum(u);
  // The band above 3m is never used by either kernel; its largest entry estimates the
  // roundoff and aliasing floor, and coefficients below a few times that floor are dropped.
  long double floor = std::numeric_limits<long double>::epsilon() * scale;
  for (int h = 3 * m; h <= nodes / 2; ++h) floor = std::max(floor, std::abs(spectrum[static_cast<std::size_t>(h)]) / nodes);
  const long double chop = 4.0L * floor;
  std::vector<std::complex<long double>> coeffs(static_cast<std::size_t>(top));
  long double mu = 1.0L;
  std::size_t last = 0;
  for (int h = 1; h <= top; ++h) {
    if (kernel == TrigKernel::Positive) mu *= static_cast<long double>(m - h + 1) / (m + h);
    else mu = h <= m ? 1.0L : static_cast<long double>(2 * m - h) / m;
    const std::complex<long double> c = spectrum[static_cast<std::size_t>(h)] / static_cast<long double>(nodes);
    if (std::abs(c) <= chop) continue;
    coeffs[static_cast<std::size_t>(h - 1)] = mu * c;
    last = static_cast<std::size_t>(h);
  }
  coeffs.resize(last);
  const long double mean = spectrum[0].real() / nodes;
  return std::make_shared<TrigUnivariate>(a, L, slope, mean, std::move(coeffs));
}

UnivariatePtr periodic_factor(const UnivariatePtr& f, int m, int cap) {
  return trig_factor(f, 0.0, 1.0, m, TrigKernel::Positive, cap);
}

SmoothingBackend parse_backend(const std::string& name) {
  if (name == "bernstein") return SmoothingBackend::Bernstein;
  if (name == "trigonometric") return SmoothingBackend::Trigonometric;
  throw Error(ErrorKind::InvalidArgument, "unknown smoothing backend '" + name + "'");
}

TensorBernstein::TensorBernstein(const std::function<double(const Eigen::VectorXd&)>& f, const Box& box, int degree,
                                 int cap)
    : dim_(static_cast<int>(box.lower.size())), m_(degree), box_(box) {
  check_degree(degree, cap);
  std::size_t total = 1;
  for (int i = 0; i < dim_; ++i) total *= static_cast<std::size_t>(m_ + 1);
  if (total > (std::size_t{1} << 24)) throw Error(ErrorKind::DegreeOverflow, "dense tensor approximant too large");
  samples_.resize(total);
  Eigen::VectorXd x(dim_);
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t code = idx;
    for (int i = 0; i < dim_; ++i) {
      const int j = static_cast<int>(code % static_cast<std::size_t>(m_ + 1));
      code /= static_cast<std::size_t>(m_ + 1);
      x(i) = box.lower(i) + (box.upper(i) - box.lower(i)) * j / m_;
    }
    samples_[idx] = f(x);
  }
}

double TensorBernstein::value(const Eigen::VectorXd& x) const {
  return partial(x, std::vector<int>(static_cast<std::size_t>(dim_), 0));
}

double TensorBernstein::partial(const Eigen::VectorXd& x, const std::vector<int>& alpha) const {
  std::vector<std::vector<long double>> w(static_cast<std::size_t>(dim_));
  for (int i = 0; i < dim_; ++i) {
    const long double len = box_.upper(i) - box_.lower(i);
    const long double t = (x(i) - box_.lower(i)) / len;
    const int r = alpha[static_cast<std::size_t>(i)];
    w[static_cast<std::size_t>(i)] = tensor_weights(m_, r, t);
    for (auto& v : w[static_cast<std::size_t>(i)]) v /= std::pow(len, r);
  }
  long double sum = 0.0L;
  for (std::size_t idx = 0; idx < samples_.size(); ++idx) {
    std::size_t code = idx;
    long double prod = samples_[idx];
    for (int i = 0; i < dim_ && prod != 0.0L; ++i) {
      prod *= w[static_cast<std::size_t>(i)][code % static_cast<std::size_t>(m_ + 1)];
      code /= static_cast<std::size_t>(m_ + 1);
    }
    sum += prod;
  }
  return static_cast<double>(sum);
}

SeparableFunction smooth_separable(const SeparableFunction& f, const RectangleDomain& rect, int degree,
                                   SmoothingBackend backend, int cap) {
  const Box box = rect.full();
  const bool trig = backend == SmoothingBackend::Trigonometric;
  const TrigKernel kernel = trig ? TrigKernel::Delayed : TrigKernel::Positive;
  return f.map_factors([&](int axis, const UnivariatePtr& g) {
    if (axis < rect.n) return trig_factor(g, 0.0, 1.0, degree, kernel, cap);
    if (trig) return trig_factor(g, box.lower(axis), box.upper(axis) - box.lower(axis), degree, kernel, cap);
    return bernstein_factor(g, box.lower(axis), box.upper(axis), degree, cap);
  });
}

// ------------------------------------------------------------------ C^k distances

double measure_Ck_distance(const std::function<double(const Eigen::VectorXd&)>& f,
                           const std::function<double(const Eigen::VectorXd&)>& g, const Box& box, int k,
                           int points_per_axis, double fd_step) {
  const int dim = static_cast<int>(box.lower.size());
  if (points_per_axis < 2) throw Error(ErrorKind::InvalidArgument, "need at least 2 grid points per axis");
  const auto alphas = multi_indices_up_to(dim, k);
  Eigen::VectorXd h = (box.upper - box.lower) * fd_step;
  auto diff = [&](const Eigen::VectorXd& x) { return f(x) - g(x); };
  std::size_t total = 1;
  for (int i = 0; i < dim; ++i) total *= static_cast<std::size_t>(points_per_axis);
  double worst = 0.0;
  Eigen::VectorXd x(dim), y(dim);
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t code = idx;
    for (int i = 0; i < dim; ++i) {
      const auto j = static_cast<double>(code % static_cast<std::size_t>(points_per_axis));
      code /= static_cast<std::size_t>(points_per_axis);
      x(i) = box.lower(i) + (box.upper(i) - box.lower(i)) * j / (points_per_axis - 1);
    }
    for (const auto& alpha : alphas) {
      // Tensor product of the per-axis stencils.
      std::vector<std::size_t> pos(static_cast<std::size_t>(dim), 0);
      double est = 0.0;
      while (true) {
        double weight = 1.0;
        y = x;
        for (int i = 0; i < dim; ++i) {
          const int a = alpha[static_cast<std::size_t>(i)];
          const auto& [offset, w] = stencil(a)[pos[static_cast<std::size_t>(i)]];
          y(i) += offset * h(i);
          weight *= w / std::pow(h(i), a);
        }
        est += weight * diff(y);
        int i = 0;
        for (; i < dim; ++i) {
          auto& p = pos[static_cast<std::size_t>(i)];
          if (++p < stencil(alpha[static_cast<std::size_t>(i)]).size()) break;
          p = 0;
        }
        if (i == dim) break;
      }
      worst = std::max(worst, std::abs(est));
    }
  }
  return worst;
}

double measure_C3_separable(const SeparableFunction& f, const SeparableFunction* g, const Box& box,
                            int points_per_axis) {
  const int dim = f.dim();
  if (g && g->dim() != dim) throw Error(ErrorKind::InvalidArgument, "separable dimension mismatch");
  std::vector<const SeparableFunction::Term*> terms;
  std::vector<long double> coef;
  for (const auto& t : f.terms()) {
    terms.push_back(&t);
    coef.push_back(t.coefficient);
  }
  if (g)
    for (const auto& t : g->terms()) {
      terms.push_back(&t);
      coef.push_back(-static_cast<long double>(t.coefficient));
    }

  // Axes on which every factor is affine need only their endpoints.
  std::vector<int> points(static_cast<std::size_t>(dim));
  for (int i = 0; i < dim; ++i) {
    bool affine = true;
    for (const auto* t : terms) {
      const auto& fac = t->factors[static_cast<std::size_t>(i)];
      if (fac && !is_affine(fac)) affine = false;
    }
    points[static_cast<std::size_t>(i)] = affine ? 2 : points_per_axis;
  }

  // jets[t][i][p]
  std::vector<std::vector<std::vector<Jet>>> jets(terms.size());
  for (std::size_t t = 0; t < terms.size(); ++t) {
    jets[t].resize(static_cast<std::size_t>(dim));
    for (int i = 0; i < dim; ++i) {
      const int P = points[static_cast<std::size_t>(i)];
      const auto& fac = terms[t]->factors[static_cast<std::size_t>(i)];
      for (int p = 0; p < P; ++p) {
        const long double x = box.lower(i) + (box.upper(i) - box.lower(i)) * static_cast<long double>(p) / (P - 1);
        jets[t][static_cast<std::size_t>(i)].push_back(fac ? fac->jet(x) : Jet::constant(1.0L));
      }
    }
  }

  const auto alphas = multi_indices_up_to(dim, 3);
  std::size_t total = 1;
  for (int P : points) total *= static_cast<std::size_t>(P);
  std::vector<int> idx(static_cast<std::size_t>(dim));
  long double worst = 0.0L;
  for (std::size_t lin = 0; lin < total; ++lin) {
    std::size_t code = lin;
    for (int i = 0; i < dim; ++i) {
      idx[static_cast<std::size_t>(i)] = static_cast<int>(code % static_cast<std::size_t>(points[static_cast<std::size_t>(i)]));
      code /= static_cast<std::size_t>(points[static_cast<std::size_t>(i)]);
    }
    for (const auto& alpha : alphas) {
      long double sum = 0.0L;
      for (std::size_t t = 0; t < terms.size(); ++t) {
        long double prod = coef[t];
        for (int i = 0; i < dim && prod != 0.0L; ++i)
          prod *= jets[t][static_cast<std::size_t>(i)][static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]
                      [alpha[static_cast<std::size_t>(i)]];
        sum += prod;
      }
      worst = std::max(worst, std::abs(sum));
    }
  }
  return static_cast<double>(worst);
}

// ------------------------------------------------------------------ sequence selection

bool ApproximantSequence::envelope_holds() const {
  for (std::size_t i = 0; i + 1 < items.size(); ++i)
    if (items[i].consecutive > items[i].threshold) return false;
  return true;
}

int choose_k0(double A, double exponent, double e0_norm) {
  constexpr int kMaxK0 = 64;
  for (int k0 = 2; k0 <= kMaxK0; ++k0)
    if (A * std::pow(4.0, -exponent * (k0 - 1)) <= e0_norm) return k0;
  throw Error(ErrorKind::ApproximantExhausted, "no k0 <= 64 satisfies the approximation rule for ||e0||");
}

ApproximantSequence select_subsequence(const HamiltonianFamily& target, const RectangleDomain& rect, int l,
                                       double sigma, double e0_norm, const SelectionOptions& options) {
  if (l < 4) throw Error(ErrorKind::InvalidArgument, "approximation needs smoothness l >= 4");
  if (!target.separable())
    throw Error(ErrorKind::InvalidArgument, "subsequence selection needs a separable target family");
  const SeparableFunction& H = *target.separable();
  const int n = target.n(), d = target.param_dim();

  ApproximantSequence seq;
  seq.exponent = l + 2.0 * sigma;
  seq.measurement_box = rect.measurement_box(options.box_radius * rect.r);
  const double ratio = std::pow(4.0, -seq.exponent);

  std::map<int, std::shared_ptr<const SeparableFunction>> built;
  auto candidate = [&](int m) -> std::pair<std::shared_ptr<const SeparableFunction>, double> {
    auto it = built.find(m);
    if (it == built.end()) {
      auto f = std::make_shared<const SeparableFunction>(smooth_separable(H, rect, m, options.backend, options.degree_cap));
      it = built.emplace(m, f).first;
      seq.candidates.push_back({m, measure_C3_separable(*f, &H, seq.measurement_box, options.points_per_axis)});
    }
    for (const auto& c : seq.candidates)
      if (c.degree == m) return {it->second, c.distance};
    return {it->second, 0.0};
  };
  auto family_for = [&](int k, const std::shared_ptr<const SeparableFunction>& f) {
    return HamiltonianFamily::from_separable(target.name() + "^" + std::to_string(k), n, d, f)
        .with_domains(rect.phase, rect.Q);
  };

  int degree = options.initial_degree;
  auto [first, A] = candidate(degree);
  seq.A = A;
  seq.k0 = A == 0.0 ? 2 : choose_k0(A, seq.exponent, e0_norm);
  const int wanted = std::max(options.levels, seq.k0 + 1);

  for (int k = 1; k <= wanted; ++k) {
    const double threshold = A * std::pow(ratio, k);
    // Margin so that |H^k - H^{k+1}| <= |H^k - H| + |H^{k+1} - H| stays below the level-k threshold.
    const double need = threshold / (1.0 + ratio);
    bool found = false;
    std::shared_ptr<const SeparableFunction> f;
    double dist = 0.0;
    if (seq.achieved_levels == k - 1 && !seq.plateau) {
      double previous = -1.0;
      while (true) {
        std::tie(f, dist) = candidate(degree);
        if (dist <= need) {
          found = true;
          break;
        }
        // Doubling the degree no longer moves the distance: roundoff, not the degree, limits it.
        if (previous > 0.0 && std::abs(dist - previous) <= options.plateau_tolerance * dist) {
          seq.plateau = true;
          break;
        }
        if (2 * degree > options.degree_cap) break;
        previous = dist;
        degree *= 2;
      }
    }
    if (found) {
      seq.items.push_back({k, degree, f, family_for(k, f), dist, threshold, 0.0, true, false});
      ++seq.achieved_levels;
      continue;
    }
    if (seq.items.empty())
      throw Error(ErrorKind::StagnationError,
                  (seq.plateau ? std::string("distance plateau at degree ") + std::to_string(degree)
                               : "degree cap " + std::to_string(options.degree_cap)) +
                      " reached with C3 distance " +
                      std::to_string(dist) + " above the first threshold " + std::to_string(need));
    Approximant rep = seq.items.back();
    rep.k = k;
    rep.threshold = threshold;
    rep.accepted = false;
    rep.repeated = true;
    seq.items.push_back(rep);
  }

  for (std::size_t i = 0; i + 1 < seq.items.size(); ++i) {
    const auto& a = seq.items[i];
    const auto& b = seq.items[i + 1];
    seq.items[i].consecutive =
        a.f == b.f ? 0.0 : measure_C3_separable(*a.f, b.f.get(), seq.measurement_box, options.points_per_axis);
  }
  return seq;
}

ApproximantSequence identity_sequence(const HamiltonianFamily& H, int levels) {
  ApproximantSequence seq;
  seq.k0 = 2;
  for (int k = 1; k <= std::max(levels, seq.k0 + 1); ++k)
    seq.items.push_back({k, 0, H.separable(), H, 0.0, 0.0, 0.0, true, false});
  seq.achieved_levels = static_cast<int>(seq.items.size());
  return seq;
}

}  // namespace kam
