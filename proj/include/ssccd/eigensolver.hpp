#pragma once

#include <cstdint>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace ssccd {

struct EigenPairs {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // columns match values
};

struct EigenOptions {
  /// Matrices up to this order are decomposed densely.
  Eigen::Index dense_limit = 2000;
  /// Residual tolerance |A v - lambda v| for the iterative path.
  double tol = 1e-10;
  /// Largest Krylov basis kept before restarting.
  Eigen::Index max_basis = 600;
  int max_restarts = 50;
  std::uint64_t seed = 0;
};

/// The k smallest eigenpairs of a symmetric matrix whose spectrum lies in
/// [0, spectral_bound]. Small matrices go through a dense self-adjoint
/// decomposition; large ones through a restarted block Krylov iteration on
/// spectral_bound * I - A, which handles repeated eigenvalues.
EigenPairs smallest_eigenpairs(const Eigen::SparseMatrix<double>& a, Eigen::Index k,
                               double spectral_bound, const EigenOptions& options = {});

}  // namespace ssccd
