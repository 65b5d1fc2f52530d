#pragma once

// Truncated Fourier series on the n-torus T^n = R^n / Z^n.
//
// A FourierMap stores coefficients c_k for multi-indices |k|_1 <= kmax and
// represents theta -> sum_k c_k exp(2 pi i k.theta). Values may be vectors
// (cols == 1) or row-major matrices. Maps are real on the real torus:
// c_{-k} = conj(c_k) for every stored k.

#include <complex>
#include <cstddef>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace kam {

using Complex = std::complex<double>;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Multi-indices k in Z^n with |k|_1 <= kmax, in lexicographic order.
class ModeSet {
 public:
  static std::shared_ptr<const ModeSet> get(int n, int kmax);

  ModeSet(int n, int kmax);

  int n() const { return n_; }
  int kmax() const { return kmax_; }
  std::size_t size() const { return l1_.size(); }
  std::span<const int> index(std::size_t i) const {
    return {indices_.data() + i * static_cast<std::size_t>(n_), static_cast<std::size_t>(n_)};
  }
  int l1(std::size_t i) const { return l1_[i]; }
  /// Position of k, or -1 when |k|_1 > kmax.
  std::ptrdiff_t find(std::span<const int> k) const;
  std::size_t zero() const { return zero_; }
  std::size_t conjugate(std::size_t i) const { return conj_[i]; }
  /// True when k is lexicographically >= 0 (first nonzero entry positive, or k = 0).
  bool is_canonical(std::size_t i) const;

 private:
  int n_;
  int kmax_;
  std::vector<int> indices_;
  std::vector<int> l1_;
  std::vector<std::ptrdiff_t> box_lookup_;
  std::vector<std::size_t> conj_;
  std::size_t zero_ = 0;
};

class FourierMap {
 public:
  FourierMap() = default;
  FourierMap(int n, int rows, int cols, int kmax);

  static FourierMap constant(int n, int kmax, const Eigen::VectorXd& value);

  int n() const { return n_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int m() const { return rows_ * cols_; }
  int kmax() const { return kmax_; }
  const ModeSet& modes() const { return *modes_; }

  Complex& at(std::size_t mode, int component) {
    return coeffs_[mode * static_cast<std::size_t>(m()) + static_cast<std::size_t>(component)];
  }
  Complex at(std::size_t mode, int component) const {
    return coeffs_[mode * static_cast<std::size_t>(m()) + static_cast<std::size_t>(component)];
  }
  /// Coefficient of k; zero for indices outside the stored band.
  Complex coeff(std::span<const int> k, int component) const;
  /// Sets c_k and, to keep the map real, c_{-k} = conj(c_k).
  void set(std::span<const int> k, int component, Complex value);

  std::span<const Complex> data() const { return coeffs_; }
  std::span<Complex> data() { return coeffs_; }

  /// Same map re-indexed on a band of different order (drops or zero-pads modes).
  FourierMap with_kmax(int kmax) const;
  FourierMap reshaped(int rows, int cols) const;
  /// Scalar map holding entry (r, c).
  FourierMap entry(int r, int c) const;

  FourierMap& operator+=(const FourierMap& other);
  FourierMap& operator-=(const FourierMap& other);
  FourierMap& operator*=(double s);
  friend FourierMap operator+(FourierMap a, const FourierMap& b) { return a += b; }
  friend FourierMap operator-(FourierMap a, const FourierMap& b) { return a -= b; }
  friend FourierMap operator*(double s, FourierMap a) { return a *= s; }

  /// Largest |c_{-k} - conj(c_k)| over stored modes.
  double reality_defect() const;

 private:
  void check_compatible(const FourierMap& other) const;

  int n_ = 0;
  int rows_ = 0;
  int cols_ = 0;
  int kmax_ = 0;
  std::shared_ptr<const ModeSet> modes_;
  std::vector<Complex> coeffs_;
};

struct StripNormValue {
  double rho = 0.0;
  double value = 0.0;
};

// Core operations.

Eigen::VectorXcd eval(const FourierMap& map, const Eigen::VectorXcd& theta);
Eigen::VectorXd eval_real(const FourierMap& map, const Eigen::VectorXd& theta);

/// Coefficient majorant sum_k |c_k|_inf exp(2 pi rho |k|_1); an upper bound of the sup on U_rho.
StripNormValue strip_norm(const FourierMap& map, double rho);

FourierMap directional_derivative(const FourierMap& map, const Eigen::VectorXd& omega);

/// Matrix-valued (m x n) derivative of a vector-valued map.
FourierMap jacobian(const FourierMap& map);

Eigen::VectorXd average(const FourierMap& map);

struct SmallDivisorOptions {
  double average_tolerance = 1e-9;
  /// Floor on |k.omega| relative to max|omega_i|.
  double relative_divisor_floor = 1e-14;
};

/// Solves d_omega u = v mode by mode; u has zero average.
FourierMap solve_small_divisor(const FourierMap& v, const Eigen::VectorXd& omega,
                               const SmallDivisorOptions& options = {});

// Grid sampling and analysis.

class TorusGrid {
 public:
  TorusGrid(int n, int points_per_dim);
  /// Grid with at least 2 (2 kmax + 1) points per dimension.
  static TorusGrid for_kmax(int n, int kmax);

  int n() const { return n_; }
  int points_per_dim() const { return per_dim_; }
  std::size_t size() const { return size_; }
  Eigen::VectorXd theta(std::size_t point) const;

 private:
  int n_;
  int per_dim_;
  std::size_t size_;
};

/// Samples of an m-component map on a TorusGrid: one row per grid point.
using GridField = RowMatrix;

GridField sample(const FourierMap& map, const TorusGrid& grid);

struct AnalysisReport {
  /// Majorant (rho = 0) of the modes resolved by the grid but dropped by truncation.
  double dropped_tail = 0.0;
};

FourierMap analyze(const GridField& values, const TorusGrid& grid, int kmax, int rows, int cols,
                   AnalysisReport* report = nullptr);

inline FourierMap analyze(const GridField& values, const TorusGrid& grid, int kmax) {
  return analyze(values, grid, kmax, static_cast<int>(values.cols()), 1);
}

/// Grid average of sampled values (exact k = 0 coefficient of the interpolant).
Eigen::VectorXd grid_average(const GridField& values);

// Embeddings K : T^n -> T^n x R^n, K(theta) = (theta, 0) + periodic(theta).

struct TorusEmbedding {
  FourierMap periodic;  ///< 2n components, n = torus dimension

  int n() const { return periodic.n(); }
  int kmax() const { return periodic.kmax(); }

  static TorusEmbedding flat(int n, int kmax, const Eigen::VectorXd& p0);

  Eigen::VectorXcd eval(const Eigen::VectorXcd& theta) const;
  Eigen::VectorXd eval_real(const Eigen::VectorXd& theta) const;
  /// DK including the identity block of the affine part.
  FourierMap jacobian() const;
  /// d_omega K = (omega, 0) + d_omega periodic, as a periodic map.
  FourierMap directional_derivative(const Eigen::VectorXd& omega) const;
  GridField sample(const TorusGrid& grid) const;
};

// Torus coefficient file: header "n m K_max", then "k_1 .. k_n re_1 im_1 .. re_m im_m".

void write_torus_file(std::ostream& out, const FourierMap& map);
FourierMap read_torus_file(std::istream& in);
void write_torus_file(const std::string& path, const FourierMap& map);
FourierMap read_torus_file(const std::string& path);

}  // namespace kam
