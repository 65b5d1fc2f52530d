#include "kamtori/nondegeneracy.hpp"

#include <sstream>

#include "kamtori/errors.hpp"

namespace kam {

namespace {

double condition_number(const Eigen::MatrixXd& a) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  const auto& s = svd.singularValues();
  if (s(s.size() - 1) == 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / s(s.size() - 1);
}

void store_row(GridField& field, Eigen::Index p, const Eigen::MatrixXd& a) {
  Eigen::Map<RowMatrix>(field.row(p).data(), a.rows(), a.cols()) = a;
}

}  // namespace

double max_entry(const Eigen::MatrixXd& a) { return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff(); }

RowMatrix embedding_points(const TorusEmbedding& K, const TorusGrid& grid) { return K.sample(grid); }

InverseGram compute_N(const TorusEmbedding& K, double rho, const NondegeneracyOptions& options) {
  return compute_N_from_jacobian(K.jacobian(), rho, options);
}

InverseGram compute_N_from_jacobian(const FourierMap& DK, double rho, const NondegeneracyOptions& options) {
  const int n = DK.n();
  const int kmax = DK.kmax();
  const TorusGrid grid = TorusGrid::for_kmax(n, kmax);
  const GridField dk = sample(DK, grid);
  const auto points = static_cast<Eigen::Index>(grid.size());

  InverseGram out;
  GridField inv(points, n * n);
  std::vector<Eigen::MatrixXd> grams(static_cast<std::size_t>(points));
  for (Eigen::Index p = 0; p < points; ++p) {
    const Eigen::MatrixXd D = grid_matrix(dk, p, 2 * n, n);
    const Eigen::MatrixXd G = D.transpose() * D;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G);
    const double lo = eig.eigenvalues()(0), hi = eig.eigenvalues()(n - 1);
    const double cond = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    out.gram_cond = std::max(out.gram_cond, cond);
    if (!(cond < options.gram_condition_limit)) {
      std::ostringstream msg;
      msg << "Gram matrix condition " << cond << " at theta = (" << grid.theta(static_cast<std::size_t>(p)).transpose()
          << ")";
      throw Error(ErrorKind::DegenerateEmbedding, msg.str());
    }
    store_row(inv, p, G.inverse());
    grams[static_cast<std::size_t>(p)] = G;
  }
  AnalysisReport report;
  out.N = analyze(inv, grid, kmax, n, n, &report);
  out.dropped_tail = report.dropped_tail;

  // Residual of the truncated N against the exact Gram, re-analysed.
  const GridField n_trunc = sample(out.N, grid);
  GridField res(points, n * n);
  for (Eigen::Index p = 0; p < points; ++p)
    store_row(res, p, grid_matrix(n_trunc, p, n, n) * grams[static_cast<std::size_t>(p)] -
                          Eigen::MatrixXd::Identity(n, n));
  out.residual = strip_norm(analyze(res, grid, kmax, n, n), rho).value;
  return out;
}

LambdaData compute_Lambda(const TorusEmbedding& K, const FourierMap& N, const HamiltonianFamily& H,
                          const Eigen::VectorXd& lambda, double rho, const NondegeneracyOptions& options,
                          bool throw_if_singular) {
  (void)rho;
  const int n = K.n();
  if (H.param_dim() != 2 * n) {
    std::ostringstream msg;
    msg << "parameter dimension " << H.param_dim() << " differs from 2n = " << 2 * n;
    throw Error(ErrorKind::InvalidArgument, msg.str());
  }
  const TorusGrid grid = TorusGrid::for_kmax(n, K.kmax());
  const GridField x = K.sample(grid);
  const GridField dk = sample(K.jacobian(), grid);
  const GridField nn = sample(N, grid);
  const Eigen::MatrixXd J = symplectic_J(n);
  const auto points = static_cast<Eigen::Index>(grid.size());

  LambdaData out;
  GridField values(points, 4 * n * n);
  for (Eigen::Index p = 0; p < points; ++p) {
    const Eigen::VectorXd xp = x.row(p).transpose();
    H.check_domain(xp, lambda);
    const Eigen::MatrixXd B = H.dgrad_dlambda(xp, lambda);
    const Eigen::MatrixXd D = grid_matrix(dk, p, 2 * n, n);
    const Eigen::MatrixXd Np = grid_matrix(nn, p, n, n);
    Eigen::MatrixXd L(2 * n, 2 * n);
    L.topRows(n) = Np * D.transpose() * (J * B);
    L.bottomRows(n) = D.transpose() * B;
    // Independent evaluation of the top block: N (DK^T J) B, associated differently.
    const Eigen::MatrixXd top = Np * ((D.transpose() * J) * B);
    out.block_defect = std::max(out.block_defect, max_entry(L.topRows(n) - top));
    store_row(values, p, L);
  }
  out.Lambda = analyze(values, grid, K.kmax(), 2 * n, 2 * n);
  out.average = Eigen::Map<const RowMatrix>(average(out.Lambda).data(), 2 * n, 2 * n);
  out.condition = condition_number(out.average);
  if (out.condition > options.lambda_condition_limit) {
    if (throw_if_singular) {
      std::ostringstream msg;
      msg << "<Lambda> has condition number " << out.condition;
      throw Error(ErrorKind::SingularLambdaAverage, msg.str());
    }
    out.tau = std::numeric_limits<double>::infinity();
    return out;
  }
  out.average_inv = out.average.inverse();
  out.tau = max_entry(out.average_inv);
  return out;
}

NondegeneracySummary summarize(const TorusEmbedding& K, const FourierMap& N, const Eigen::MatrixXd& lambda_avg_inv,
                               double rho) {
  NondegeneracySummary s;
  s.d = strip_norm(K.jacobian(), rho).value;
  s.v = strip_norm(N, rho).value;
  s.tau = lambda_avg_inv.size() ? max_entry(lambda_avg_inv) : std::numeric_limits<double>::infinity();
  return s;
}

NondegeneracyData compute_nondegeneracy(const TorusEmbedding& K, const HamiltonianFamily& H,
                                        const Eigen::VectorXd& lambda, double rho,
                                        const NondegeneracyOptions& options) {
  const InverseGram g = compute_N(K, rho, options);
  const LambdaData l = compute_Lambda(K, g.N, H, lambda, rho, options);
  const NondegeneracySummary s = summarize(K, g.N, l.average_inv, rho);
  NondegeneracyData out;
  out.N = g.N;
  out.Lambda = l.Lambda;
  out.Lambda_avg = l.average;
  out.Lambda_avg_inv = l.average_inv;
  out.rho = rho;
  out.d = s.d;
  out.v = s.v;
  out.tau = s.tau;
  out.gram_cond = g.gram_cond;
  out.lambda_cond = l.condition;
  out.residual_N = g.residual;
  out.block_defect = l.block_defect;
  return out;
}

}  // namespace kam
