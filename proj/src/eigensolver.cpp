#include "ssccd/eigensolver.hpp"

#include <algorithm>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "ssccd/error.hpp"
#include "ssccd/random.hpp"

namespace ssccd {

namespace {

EigenPairs dense_smallest(const Eigen::SparseMatrix<double>& a, Eigen::Index k) {
  const Eigen::MatrixXd dense(a);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense);
  if (es.info() != Eigen::Success) throw NumericalError("dense eigendecomposition failed");
  return {es.eigenvalues().head(k), es.eigenvectors().leftCols(k)};
}

// Orthogonalizes `block` against `basis` (twice, classical Gram-Schmidt) and
// orthonormalizes the result. Columns that vanish are replaced by fresh random
// directions so the block keeps its width.
Eigen::MatrixXd extend_basis(const Eigen::MatrixXd& basis, Eigen::MatrixXd block, Rng& rng) {
  const Eigen::Index n = block.rows();
  for (int attempt = 0; attempt < 4; ++attempt) {
    for (int pass = 0; pass < 2; ++pass) {
      if (basis.cols() > 0) block -= basis * (basis.transpose() * block);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(block);
    qr.setThreshold(1e-10);
    const Eigen::Index rank = qr.rank();
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, block.cols());
    if (rank == block.cols()) return q;
    // Keep the well-conditioned part, refill the rest randomly.
    Eigen::MatrixXd refill(n, block.cols());
    refill.leftCols(rank) = q.leftCols(rank);
    for (Eigen::Index c = rank; c < block.cols(); ++c) {
      for (Eigen::Index r = 0; r < n; ++r) refill(r, c) = standard_normal(rng);
    }
    block = refill;
  }
  throw NumericalError("block Krylov basis extension failed to stay independent");
}

EigenPairs krylov_smallest(const Eigen::SparseMatrix<double>& a, Eigen::Index k, double bound,
                           const EigenOptions& opt) {
  const Eigen::Index n = a.rows();
  const Eigen::Index block_width = std::min<Eigen::Index>(n, k + 8);
  Rng rng(opt.seed);

  // Largest eigenpairs of m = bound*I - a are the smallest of a.
  auto apply = [&](const Eigen::MatrixXd& x) -> Eigen::MatrixXd {
    Eigen::MatrixXd y = bound * x;
    y.noalias() -= a * x;
    return y;
  };

  Eigen::MatrixXd start(n, block_width);
  for (Eigen::Index c = 0; c < block_width; ++c) {
    for (Eigen::Index r = 0; r < n; ++r) start(r, c) = standard_normal(rng);
  }
  start = extend_basis(Eigen::MatrixXd(n, 0), start, rng);

  for (int restart = 0; restart <= opt.max_restarts; ++restart) {
    Eigen::MatrixXd basis = start;
    Eigen::MatrixXd image = apply(basis);
    while (true) {
      const Eigen::MatrixXd h = basis.transpose() * image;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (h + h.transpose()));
      const Eigen::Index m = basis.cols();
      // Descending Ritz values of the shifted operator.
      Eigen::MatrixXd u = es.eigenvectors().rowwise().reverse();
      Eigen::VectorXd mu = es.eigenvalues().reverse();
      const Eigen::Index take = std::min(k, m);
      const Eigen::MatrixXd ritz = basis * u.leftCols(take);
      const Eigen::MatrixXd residual = image * u.leftCols(take) - ritz * mu.head(take).asDiagonal();
      double worst = 0.0;
      for (Eigen::Index c = 0; c < take; ++c) worst = std::max(worst, residual.col(c).norm());

      if ((take == k && worst <= opt.tol) || m >= n) {
        EigenPairs out;
        out.values = (bound - mu.head(take).array()).matrix();
        out.vectors = ritz;
        return out;
      }
      const Eigen::Index width = std::min(block_width, n - m);
      if (m + width > opt.max_basis) {
        // Restart from the leading Ritz vectors.
        const Eigen::Index keep = std::min(block_width, m);
        start = extend_basis(Eigen::MatrixXd(n, 0), basis * u.leftCols(keep), rng);
        break;
      }
      const Eigen::MatrixXd next = extend_basis(basis, image.rightCols(width), rng);
      const Eigen::MatrixXd next_image = apply(next);
      basis.conservativeResize(Eigen::NoChange, m + next.cols());
      basis.rightCols(next.cols()) = next;
      image.conservativeResize(Eigen::NoChange, m + next.cols());
      image.rightCols(next.cols()) = next_image;
    }
  }
  throw NumericalError("block Krylov eigensolver did not converge");
}

}  // namespace

EigenPairs smallest_eigenpairs(const Eigen::SparseMatrix<double>& a, Eigen::Index k,
                               double spectral_bound, const EigenOptions& options) {
  if (a.rows() != a.cols()) throw ValidationError("eigensolver: matrix is not square");
  if (k <= 0 || k > a.rows()) throw ConfigError("eigensolver: invalid eigenpair count");
  if (a.rows() <= options.dense_limit) return dense_smallest(a, k);
  return krylov_smallest(a, k, spectral_bound, options);
}

}  // namespace ssccd
