#include "kamtori/fourier_torus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <ostream>
#include <sstream>
#include <utility>

#include "kamtori/errors.hpp"

namespace kam {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::size_t ipow(std::size_t base, int exp) {
  std::size_t r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

// Applies T (out x in) along one axis of a row-major complex array with trailing
// component dimension m.
std::vector<Complex> apply_axis(const std::vector<Complex>& in, std::vector<int>& shape, int m,
                                int axis, const Eigen::MatrixXcd& T) {
  std::size_t outer = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<std::size_t>(shape[d]);
  std::size_t inner = static_cast<std::size_t>(m);
  for (std::size_t d = static_cast<std::size_t>(axis) + 1; d < shape.size(); ++d)
    inner *= static_cast<std::size_t>(shape[d]);
  const auto len_in = static_cast<std::size_t>(T.cols());
  const auto len_out = static_cast<std::size_t>(T.rows());
  std::vector<Complex> out(outer * len_out * inner, Complex(0.0, 0.0));
  for (std::size_t o = 0; o < outer; ++o) {
    const Complex* src = in.data() + o * len_in * inner;
    Complex* dst = out.data() + o * len_out * inner;
    for (std::size_t j = 0; j < len_out; ++j) {
      Complex* drow = dst + j * inner;
      for (std::size_t k = 0; k < len_in; ++k) {
        const Complex t = T(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
        const Complex* srow = src + k * inner;
        for (std::size_t i = 0; i < inner; ++i) drow[i] += t * srow[i];
      }
    }
  }
  shape[static_cast<std::size_t>(axis)] = static_cast<int>(len_out);
  return out;
}

}  // namespace

// ---------------------------------------------------------------- ModeSet

std::shared_ptr<const ModeSet> ModeSet::get(int n, int kmax) {
  static std::mutex mutex;
  static std::map<std::pair<int, int>, std::shared_ptr<const ModeSet>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto& slot = cache[{n, kmax}];
  if (!slot) slot = std::make_shared<const ModeSet>(n, kmax);
  return slot;
}

ModeSet::ModeSet(int n, int kmax) : n_(n), kmax_(kmax) {
  if (n < 1 || kmax < 0) throw Error(ErrorKind::InvalidArgument, "ModeSet needs n >= 1, kmax >= 0");
  const std::size_t side = 2 * static_cast<std::size_t>(kmax) + 1;
  const std::size_t box = ipow(side, n);
  box_lookup_.assign(box, -1);
  std::vector<int> k(static_cast<std::size_t>(n));
  for (std::size_t b = 0; b < box; ++b) {
    std::size_t rem = b;
    int l1 = 0;
    for (int d = n - 1; d >= 0; --d) {
      k[static_cast<std::size_t>(d)] = static_cast<int>(rem % side) - kmax;
      rem /= side;
      l1 += std::abs(k[static_cast<std::size_t>(d)]);
    }
    if (l1 > kmax) continue;
    box_lookup_[b] = static_cast<std::ptrdiff_t>(l1_.size());
    if (l1 == 0) zero_ = l1_.size();
    indices_.insert(indices_.end(), k.begin(), k.end());
    l1_.push_back(l1);
  }
  conj_.resize(l1_.size());
  for (std::size_t i = 0; i < l1_.size(); ++i) {
    for (int d = 0; d < n; ++d) k[static_cast<std::size_t>(d)] = -index(i)[static_cast<std::size_t>(d)];
    conj_[i] = static_cast<std::size_t>(find(k));
  }
}

std::ptrdiff_t ModeSet::find(std::span<const int> k) const {
  const std::size_t side = 2 * static_cast<std::size_t>(kmax_) + 1;
  std::size_t b = 0;
  int l1 = 0;
  for (int d = 0; d < n_; ++d) {
    const int kd = k[static_cast<std::size_t>(d)];
    l1 += std::abs(kd);
    if (l1 > kmax_) return -1;
    b = b * side + static_cast<std::size_t>(kd + kmax_);
  }
  return box_lookup_[b];
}

bool ModeSet::is_canonical(std::size_t i) const {
  for (int kd : index(i)) {
    if (kd > 0) return true;
    if (kd < 0) return false;
  }
  return true;
}

// ------------------------------------------------------------- FourierMap

FourierMap::FourierMap(int n, int rows, int cols, int kmax)
    : n_(n), rows_(rows), cols_(cols), kmax_(kmax), modes_(ModeSet::get(n, kmax)) {
  if (rows < 1 || cols < 1) throw Error(ErrorKind::InvalidArgument, "FourierMap needs rows, cols >= 1");
  coeffs_.assign(modes_->size() * static_cast<std::size_t>(m()), Complex(0.0, 0.0));
}

FourierMap FourierMap::constant(int n, int kmax, const Eigen::VectorXd& value) {
  FourierMap map(n, static_cast<int>(value.size()), 1, kmax);
  for (int c = 0; c < map.m(); ++c) map.at(map.modes().zero(), c) = value(c);
  return map;
}

Complex FourierMap::coeff(std::span<const int> k, int component) const {
  const auto idx = modes_->find(k);
  if (idx < 0) return {0.0, 0.0};
  return at(static_cast<std::size_t>(idx), component);
}

void FourierMap::set(std::span<const int> k, int component, Complex value) {
  const auto idx = modes_->find(k);
  if (idx < 0) throw Error(ErrorKind::InvalidArgument, "mode outside the stored band");
  const auto i = static_cast<std::size_t>(idx);
  if (i == modes_->zero()) value = Complex(value.real(), 0.0);
  at(i, component) = value;
  at(modes_->conjugate(i), component) = std::conj(value);
}

FourierMap FourierMap::with_kmax(int kmax) const {
  FourierMap out(n_, rows_, cols_, kmax);
  for (std::size_t i = 0; i < out.modes().size(); ++i) {
    const auto src = modes_->find(out.modes().index(i));
    if (src < 0) continue;
    for (int c = 0; c < m(); ++c) out.at(i, c) = at(static_cast<std::size_t>(src), c);
  }
  return out;
}

FourierMap FourierMap::reshaped(int rows, int cols) const {
  if (rows * cols != m()) throw Error(ErrorKind::InvalidArgument, "reshape changes component count");
  FourierMap out = *this;
  out.rows_ = rows;
  out.cols_ = cols;
  return out;
}

FourierMap FourierMap::entry(int r, int c) const {
  FourierMap out(n_, 1, 1, kmax_);
  const int comp = r * cols_ + c;
  for (std::size_t i = 0; i < modes_->size(); ++i) out.at(i, 0) = at(i, comp);
  return out;
}

void FourierMap::check_compatible(const FourierMap& other) const {
  if (n_ != other.n_ || m() != other.m() || kmax_ != other.kmax_)
    throw Error(ErrorKind::InvalidArgument, "incompatible FourierMap shapes");
}

FourierMap& FourierMap::operator+=(const FourierMap& other) {
  check_compatible(other);
  for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += other.coeffs_[i];
  return *this;
}

FourierMap& FourierMap::operator-=(const FourierMap& other) {
  check_compatible(other);
  for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] -= other.coeffs_[i];
  return *this;
}

FourierMap& FourierMap::operator*=(double s) {
  for (auto& c : coeffs_) c *= s;
  return *this;
}

double FourierMap::reality_defect() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < modes_->size(); ++i) {
    const std::size_t j = modes_->conjugate(i);
    for (int c = 0; c < m(); ++c) worst = std::max(worst, std::abs(at(j, c) - std::conj(at(i, c))));
  }
  return worst;
}

// ------------------------------------------------------------- operations

Eigen::VectorXcd eval(const FourierMap& map, const Eigen::VectorXcd& theta) {
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(map.m());
  const auto& modes = map.modes();
  for (std::size_t i = 0; i < modes.size(); ++i) {
    Complex phase(0.0, 0.0);
    const auto k = modes.index(i);
    for (int d = 0; d < map.n(); ++d) phase += static_cast<double>(k[static_cast<std::size_t>(d)]) * theta(d);
    const Complex basis = std::exp(Complex(0.0, kTwoPi) * phase);
    for (int c = 0; c < map.m(); ++c) out(c) += map.at(i, c) * basis;
  }
  return out;
}

Eigen::VectorXd eval_real(const FourierMap& map, const Eigen::VectorXd& theta) {
  return eval(map, theta.cast<Complex>()).real();
}

StripNormValue strip_norm(const FourierMap& map, double rho) {
  if (rho < 0.0) throw Error(ErrorKind::InvalidArgument, "strip width must be >= 0");
  const auto& modes = map.modes();
  double total = 0.0;
  for (std::size_t i = 0; i < modes.size(); ++i) {
    double cmax = 0.0;
    for (int c = 0; c < map.m(); ++c) cmax = std::max(cmax, std::abs(map.at(i, c)));
    if (cmax == 0.0) continue;
    total += cmax * std::exp(kTwoPi * rho * modes.l1(i));
  }
  if (!std::isfinite(total))
    throw Error(ErrorKind::Overflow, "strip majorant not representable at rho = " + std::to_string(rho));
  return {rho, total};
}

FourierMap directional_derivative(const FourierMap& map, const Eigen::VectorXd& omega) {
  FourierMap out = map;
  const auto& modes = map.modes();
  for (std::size_t i = 0; i < modes.size(); ++i) {
    double kw = 0.0;
    const auto k = modes.index(i);
    for (int d = 0; d < map.n(); ++d) kw += k[static_cast<std::size_t>(d)] * omega(d);
    const Complex mult(0.0, kTwoPi * kw);
    for (int c = 0; c < map.m(); ++c) out.at(i, c) *= mult;
  }
  return out;
}

FourierMap jacobian(const FourierMap& map) {
  if (map.cols() != 1) throw Error(ErrorKind::InvalidArgument, "jacobian needs a vector-valued map");
  const int n = map.n();
  FourierMap out(n, map.rows(), n, map.kmax());
  const auto& modes = map.modes();
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const auto k = modes.index(i);
    for (int r = 0; r < map.rows(); ++r)
      for (int j = 0; j < n; ++j)
        out.at(i, r * n + j) = Complex(0.0, kTwoPi * k[static_cast<std::size_t>(j)]) * map.at(i, r);
  }
  return out;
}

Eigen::VectorXd average(const FourierMap& map) {
  Eigen::VectorXd out(map.m());
  for (int c = 0; c < map.m(); ++c) out(c) = map.at(map.modes().zero(), c).real();
  return out;
}

FourierMap solve_small_divisor(const FourierMap& v, const Eigen::VectorXd& omega,
                               const SmallDivisorOptions& options) {
  const auto& modes = v.modes();
  const std::size_t zero = modes.zero();
  for (int c = 0; c < v.m(); ++c) {
    if (std::abs(v.at(zero, c)) > options.average_tolerance) {
      std::ostringstream msg;
      msg << "component " << c << " has average " << std::abs(v.at(zero, c)) << " > "
          << options.average_tolerance;
      throw Error(ErrorKind::ZeroAverageViolation, msg.str());
    }
  }
  const double floor = options.relative_divisor_floor * omega.cwiseAbs().maxCoeff();
  FourierMap u(v.n(), v.rows(), v.cols(), v.kmax());
  for (std::size_t i = 0; i < modes.size(); ++i) {
    if (i == zero) continue;
    const auto k = modes.index(i);
    double kw = 0.0;
    for (int d = 0; d < v.n(); ++d) kw += k[static_cast<std::size_t>(d)] * omega(d);
    if (std::abs(kw) < floor) {
      std::ostringstream msg;
      msg << "|k.omega| = " << std::abs(kw) << " below floor " << floor << " at k = (";
      for (int d = 0; d < v.n(); ++d) msg << (d ? "," : "") << k[static_cast<std::size_t>(d)];
      msg << ")";
      throw Error(ErrorKind::SmallDivisorUnderflow, msg.str());
    }
    const Complex div(0.0, kTwoPi * kw);
    for (int c = 0; c < v.m(); ++c) u.at(i, c) = v.at(i, c) / div;
  }
  return u;
}

// ------------------------------------------------------------------- grids

TorusGrid::TorusGrid(int n, int points_per_dim)
    : n_(n), per_dim_(points_per_dim), size_(ipow(static_cast<std::size_t>(points_per_dim), n)) {
  if (n < 1 || points_per_dim < 1) throw Error(ErrorKind::InvalidArgument, "bad grid size");
}

TorusGrid TorusGrid::for_kmax(int n, int kmax) { return TorusGrid(n, 2 * (2 * kmax + 1)); }

Eigen::VectorXd TorusGrid::theta(std::size_t point) const {
  Eigen::VectorXd t(n_);
  for (int d = n_ - 1; d >= 0; --d) {
    t(d) = static_cast<double>(point % static_cast<std::size_t>(per_dim_)) / per_dim_;
    point /= static_cast<std::size_t>(per_dim_);
  }
  return t;
}

GridField sample(const FourierMap& map, const TorusGrid& grid) {
  if (grid.n() != map.n()) throw Error(ErrorKind::InvalidArgument, "grid dimension mismatch");
  const int n = map.n();
  const int K = map.kmax();
  const int side = 2 * K + 1;
  const int m = map.m();
  const int N = grid.points_per_dim();

  std::vector<int> shape(static_cast<std::size_t>(n), side);
  std::vector<Complex> box(ipow(static_cast<std::size_t>(side), n) * static_cast<std::size_t>(m));
  const auto& modes = map.modes();
  for (std::size_t i = 0; i < modes.size(); ++i) {
    std::size_t b = 0;
    for (int kd : modes.index(i)) b = b * static_cast<std::size_t>(side) + static_cast<std::size_t>(kd + K);
    for (int c = 0; c < m; ++c) box[b * static_cast<std::size_t>(m) + static_cast<std::size_t>(c)] = map.at(i, c);
  }
  Eigen::MatrixXcd T(N, side);
  for (int j = 0; j < N; ++j)
    for (int k = 0; k < side; ++k)
      T(j, k) = std::polar(1.0, kTwoPi * static_cast<double>((k - K) * static_cast<long>(j) % N) / N);
  for (int d = 0; d < n; ++d) box = apply_axis(box, shape, m, d, T);

  GridField out(static_cast<Eigen::Index>(grid.size()), m);
  for (std::size_t p = 0; p < grid.size(); ++p)
    for (int c = 0; c < m; ++c)
      out(static_cast<Eigen::Index>(p), c) = box[p * static_cast<std::size_t>(m) + static_cast<std::size_t>(c)].real();
  return out;
}

FourierMap analyze(const GridField& values, const TorusGrid& grid, int kmax, int rows, int cols,
                   AnalysisReport* report) {
  const int n = grid.n();
  const int m = static_cast<int>(values.cols());
  if (rows * cols != m) throw Error(ErrorKind::InvalidArgument, "analysis shape mismatch");
  if (static_cast<std::size_t>(values.rows()) != grid.size())
    throw Error(ErrorKind::InvalidArgument, "sample count does not match grid");
  const int N = grid.points_per_dim();
  // Resolve every mode the grid can see when the dropped tail is requested.
  const int resolved = report ? std::max(kmax, (N - 1) / 2) : kmax;
  const int side = 2 * resolved + 1;

  std::vector<int> shape(static_cast<std::size_t>(n), N);
  std::vector<Complex> box(grid.size() * static_cast<std::size_t>(m));
  for (std::size_t p = 0; p < grid.size(); ++p)
    for (int c = 0; c < m; ++c)
      box[p * static_cast<std::size_t>(m) + static_cast<std::size_t>(c)] = values(static_cast<Eigen::Index>(p), c);
  Eigen::MatrixXcd T(side, N);
  for (int k = 0; k < side; ++k)
    for (int j = 0; j < N; ++j)
      T(k, j) = std::polar(1.0 / N, -kTwoPi * static_cast<double>((k - resolved) * static_cast<long>(j) % N) / N);
  for (int d = 0; d < n; ++d) box = apply_axis(box, shape, m, d, T);

  FourierMap out(n, rows, cols, kmax);
  const auto& modes = out.modes();
  auto box_index = [&](std::span<const int> k) {
    std::size_t b = 0;
    for (int kd : k) b = b * static_cast<std::size_t>(side) + static_cast<std::size_t>(kd + resolved);
    return b;
  };
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const std::size_t b = box_index(modes.index(i));
    for (int c = 0; c < m; ++c) out.at(i, c) = box[b * static_cast<std::size_t>(m) + static_cast<std::size_t>(c)];
  }
  // Enforce exact conjugate symmetry.
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const std::size_t j = modes.conjugate(i);
    if (j < i) continue;
    for (int c = 0; c < m; ++c) {
      const Complex sym = 0.5 * (out.at(i, c) + std::conj(out.at(j, c)));
      out.at(i, c) = sym;
      out.at(j, c) = std::conj(sym);
    }
  }
  // Zero the non-constant coefficients that sit below the transform's roundoff
  // floor; strip weights would otherwise amplify pure noise.
  for (int c = 0; c < m; ++c) {
    const double floor = 4.0 * std::numeric_limits<double>::epsilon() * std::sqrt(static_cast<double>(grid.size())) *
                         values.col(c).cwiseAbs().maxCoeff();
    for (std::size_t i = 0; i < modes.size(); ++i)
      if (i != modes.zero() && std::abs(out.at(i, c)) < floor) out.at(i, c) = 0.0;
  }
  if (report) {
    report->dropped_tail = 0.0;
    const std::size_t box_size = shape.empty() ? 0 : ipow(static_cast<std::size_t>(side), n);
    std::vector<int> k(static_cast<std::size_t>(n));
    for (std::size_t b = 0; b < box_size; ++b) {
      std::size_t rem = b;
      int l1 = 0;
      for (int d = n - 1; d >= 0; --d) {
        k[static_cast<std::size_t>(d)] = static_cast<int>(rem % static_cast<std::size_t>(side)) - resolved;
        rem /= static_cast<std::size_t>(side);
        l1 += std::abs(k[static_cast<std::size_t>(d)]);
      }
      if (l1 <= kmax) continue;
      double cmax = 0.0;
      for (int c = 0; c < m; ++c)
        cmax = std::max(cmax, std::abs(box[b * static_cast<std::size_t>(m) + static_cast<std::size_t>(c)]));
      report->dropped_tail += cmax;
    }
  }
  return out;
}

Eigen::VectorXd grid_average(const GridField& values) { return values.colwise().mean().transpose(); }

// -------------------------------------------------------------- embeddings

TorusEmbedding TorusEmbedding::flat(int n, int kmax, const Eigen::VectorXd& p0) {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(2 * n);
  c.tail(n) = p0;
  return {FourierMap::constant(n, kmax, c)};
}

Eigen::VectorXcd TorusEmbedding::eval(const Eigen::VectorXcd& theta) const {
  Eigen::VectorXcd out = kam::eval(periodic, theta);
  out.head(n()) += theta;
  return out;
}

Eigen::VectorXd TorusEmbedding::eval_real(const Eigen::VectorXd& theta) const {
  return eval(theta.cast<Complex>()).real();
}

FourierMap TorusEmbedding::jacobian() const {
  FourierMap dk = kam::jacobian(periodic);
  const std::size_t zero = dk.modes().zero();
  for (int j = 0; j < n(); ++j) dk.at(zero, j * n() + j) += 1.0;
  return dk;
}

FourierMap TorusEmbedding::directional_derivative(const Eigen::VectorXd& omega) const {
  FourierMap d = kam::directional_derivative(periodic, omega);
  const std::size_t zero = d.modes().zero();
  for (int j = 0; j < n(); ++j) d.at(zero, j) += omega(j);
  return d;
}

GridField TorusEmbedding::sample(const TorusGrid& grid) const {
  GridField values = kam::sample(periodic, grid);
  for (std::size_t p = 0; p < grid.size(); ++p)
    values.row(static_cast<Eigen::Index>(p)).head(n()) += grid.theta(p).transpose();
  return values;
}

// -------------------------------------------------------------- torus files

void write_torus_file(std::ostream& out, const FourierMap& map) {
  out << map.n() << ' ' << map.m() << ' ' << map.kmax() << '\n';
  out << std::setprecision(17);
  const auto& modes = map.modes();
  for (std::size_t i = 0; i < modes.size(); ++i) {
    if (!modes.is_canonical(i)) continue;
    bool first = true;
    for (int kd : modes.index(i)) {
      out << (first ? "" : " ") << kd;
      first = false;
    }
    for (int c = 0; c < map.m(); ++c) out << ' ' << map.at(i, c).real() << ' ' << map.at(i, c).imag();
    out << '\n';
  }
}

FourierMap read_torus_file(std::istream& in) {
  int n = 0, m = 0, kmax = 0;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::ParseError, "torus file: missing header");
  {
    std::istringstream hs(line);
    if (!(hs >> n >> m >> kmax) || n < 1 || m < 1 || kmax < 0)
      throw Error(ErrorKind::ParseError, "torus file: bad header '" + line + "'");
  }
  FourierMap map(n, m, 1, kmax);
  std::vector<char> seen(map.modes().size(), 0);
  std::vector<int> k(static_cast<std::size_t>(n));
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    for (auto& kd : k)
      if (!(ls >> kd)) throw Error(ErrorKind::ParseError, "torus file line " + std::to_string(lineno));
    const auto idx = map.modes().find(k);
    if (idx < 0)
      throw Error(ErrorKind::ParseError, "torus file line " + std::to_string(lineno) + ": |k|_1 > K_max");
    for (int c = 0; c < m; ++c) {
      double re = 0.0, im = 0.0;
      if (!(ls >> re >> im))
        throw Error(ErrorKind::ParseError, "torus file line " + std::to_string(lineno) + ": missing values");
      map.at(static_cast<std::size_t>(idx), c) = Complex(re, im);
    }
    seen[static_cast<std::size_t>(idx)] = 1;
  }
  // Rebuild conjugate partners that were not listed.
  for (std::size_t i = 0; i < seen.size(); ++i) {
    const std::size_t j = map.modes().conjugate(i);
    if (seen[i] && !seen[j])
      for (int c = 0; c < m; ++c) map.at(j, c) = std::conj(map.at(i, c));
  }
  return map;
}

void write_torus_file(const std::string& path, const FourierMap& map) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write " + path);
  write_torus_file(out, map);
}

FourierMap read_torus_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ParseError, "cannot open " + path);
  return read_torus_file(in);
}

}  // namespace kam
