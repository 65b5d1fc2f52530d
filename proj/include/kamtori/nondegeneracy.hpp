#pragma once

// Non-degeneracy data of an approximately invariant torus: the inverse Gram
// matrix N of the tangent frame, the parameter-coupling matrix Lambda with its
// average, and the scalar summaries d, v, tau.

#include <Eigen/Dense>

#include "kamtori/fourier_torus.hpp"
#include "kamtori/hamiltonian.hpp"

namespace kam {

struct NondegeneracyOptions {
  double gram_condition_limit = 1e8;
  double lambda_condition_limit = 1e10;
};

/// Entrywise max norm |A| = max |a_ij|.
double max_entry(const Eigen::MatrixXd& a);

struct InverseGram {
  FourierMap N;              ///< n x n
  double gram_cond = 0.0;    ///< worst condition number over the grid
  double residual = 0.0;     ///< strip norm of N * Gram - I
  double dropped_tail = 0.0; ///< energy of the analysis beyond kmax
};

/// Pointwise inverse of DK^T DK re-expanded in Fourier. Throws DegenerateEmbedding.
InverseGram compute_N(const TorusEmbedding& K, double rho, const NondegeneracyOptions& options = {});
/// Same, from a 2n x n frame DK given directly.
InverseGram compute_N_from_jacobian(const FourierMap& DK, double rho, const NondegeneracyOptions& options = {});

struct LambdaData {
  FourierMap Lambda;              ///< 2n x 2n
  Eigen::MatrixXd average;
  Eigen::MatrixXd average_inv;    ///< empty when singular
  double condition = 0.0;
  double tau = 0.0;
  /// Max over the grid of |top block - N * DK^T J dH/dlambda|, computed independently.
  double block_defect = 0.0;
};

/// Lambda(theta) = [ N DK^T J d_lambda grad H ; DK^T d_lambda grad H ] at K(theta).
/// With throw_if_singular, a badly conditioned average raises SingularLambdaAverage.
LambdaData compute_Lambda(const TorusEmbedding& K, const FourierMap& N, const HamiltonianFamily& H,
                          const Eigen::VectorXd& lambda, double rho, const NondegeneracyOptions& options = {},
                          bool throw_if_singular = true);

struct NondegeneracySummary {
  double d = 0.0;
  double v = 0.0;
  double tau = 0.0;
};

NondegeneracySummary summarize(const TorusEmbedding& K, const FourierMap& N, const Eigen::MatrixXd& lambda_avg_inv,
                               double rho);

struct NondegeneracyData {
  FourierMap N;
  FourierMap Lambda;
  Eigen::MatrixXd Lambda_avg;
  Eigen::MatrixXd Lambda_avg_inv;
  double rho = 0.0;
  double d = 0.0;
  double v = 0.0;
  double tau = 0.0;
  double gram_cond = 0.0;
  double lambda_cond = 0.0;
  double residual_N = 0.0;
  double block_defect = 0.0;
};

/// All of the above at (K, lambda). Requires param_dim = 2n.
NondegeneracyData compute_nondegeneracy(const TorusEmbedding& K, const HamiltonianFamily& H,
                                        const Eigen::VectorXd& lambda, double rho,
                                        const NondegeneracyOptions& options = {});

/// Phase-space point x = K(theta) for each grid point, as rows.
RowMatrix embedding_points(const TorusEmbedding& K, const TorusGrid& grid);

/// View of row p of a matrix-valued grid field as a rows x cols matrix.
inline Eigen::MatrixXd grid_matrix(const GridField& field, Eigen::Index p, int rows, int cols) {
  return Eigen::Map<const RowMatrix>(field.row(p).data(), rows, cols);
}

}  // namespace kam
