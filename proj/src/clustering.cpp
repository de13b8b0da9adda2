#include "ssccd/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ssccd/error.hpp"

namespace ssccd {

nlohmann::json ClusterAssignment::to_json() const {
  return {{"labels", labels},
          {"n_c", n_c},
          {"eigenvalues", eigenvalues},
          {"seed", seed},
          {"outlier_label", kOutlier}};
}

ClusterAssignment ClusterAssignment::from_json(const nlohmann::json& j) {
  ClusterAssignment a;
  try {
    a.labels = j.at("labels").get<std::vector<int>>();
    a.n_c = j.at("n_c").get<int>();
    a.eigenvalues = j.at("eigenvalues").get<std::vector<double>>();
    a.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("cluster assignment: ") + e.what());
  }
  return a;
}

Eigen::SparseMatrix<double> build_affinity(const SelfRepresentation& rep) {
  const auto inliers = rep.inlier_indices();
  if (inliers.empty()) throw ValidationError("build_affinity: empty inlier set");
  std::vector<Eigen::Index> position(rep.size(), -1);
  for (std::size_t k = 0; k < inliers.size(); ++k) position[inliers[k]] = static_cast<Eigen::Index>(k);

  std::vector<Eigen::Triplet<double>> triplets;
  for (Eigen::Index col = 0; col < rep.coefficients.outerSize(); ++col) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(rep.coefficients, col); it; ++it) {
      const auto r = position[static_cast<std::size_t>(it.row())];
      const auto c = position[static_cast<std::size_t>(it.col())];
      if (r < 0 || c < 0 || r == c || it.value() == 0.0) continue;
      triplets.emplace_back(r, c, std::abs(it.value()));
      triplets.emplace_back(c, r, std::abs(it.value()));
    }
  }
  const auto m = static_cast<Eigen::Index>(inliers.size());
  Eigen::SparseMatrix<double> w(m, m);
  // Duplicates are summed, giving |C_ij| + |C_ji| in both (i,j) and (j,i).
  w.setFromTriplets(triplets.begin(), triplets.end());
  w.makeCompressed();
  return w;
}

Eigen::SparseMatrix<double> normalized_laplacian(const Eigen::SparseMatrix<double>& affinity,
                                                 std::vector<Eigen::Index>& active) {
  const Eigen::Index n = affinity.rows();
  Eigen::VectorXd degree = Eigen::VectorXd::Zero(n);
  for (Eigen::Index col = 0; col < affinity.outerSize(); ++col) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(affinity, col); it; ++it) {
      degree(it.row()) += it.value();
    }
  }
  active.clear();
  std::vector<Eigen::Index> position(static_cast<std::size_t>(n), -1);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (degree(i) > 0.0) {
      position[static_cast<std::size_t>(i)] = static_cast<Eigen::Index>(active.size());
      active.push_back(i);
    }
  }
  const auto m = static_cast<Eigen::Index>(active.size());
  std::vector<Eigen::Triplet<double>> triplets;
  for (Eigen::Index i = 0; i < m; ++i) triplets.emplace_back(i, i, 1.0);
  for (Eigen::Index col = 0; col < affinity.outerSize(); ++col) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(affinity, col); it; ++it) {
      const auto r = position[static_cast<std::size_t>(it.row())];
      const auto c = position[static_cast<std::size_t>(it.col())];
      if (r < 0 || c < 0) continue;
      triplets.emplace_back(r, c, -it.value() / std::sqrt(degree(it.row()) * degree(it.col())));
    }
  }
  Eigen::SparseMatrix<double> l(m, m);
  l.setFromTriplets(triplets.begin(), triplets.end());
  l.makeCompressed();
  return l;
}

EigengapResult select_cluster_count(const Eigen::SparseMatrix<double>& affinity, int k_max,
                                    const SpectralOptions& options) {
  if (k_max < 2) throw ConfigError("select_cluster_count: k_max must be >= 2");
  std::vector<Eigen::Index> active;
  const auto lap = normalized_laplacian(affinity, active);
  if (active.empty()) throw NumericalError("select_cluster_count: affinity is all zero");
  const Eigen::Index count = std::min<Eigen::Index>(k_max + 1, lap.rows());
  const EigenPairs pairs = smallest_eigenpairs(lap, count, 2.0, options.eigen);

  EigengapResult r;
  r.eigenvalues.assign(pairs.values.data(), pairs.values.data() + pairs.values.size());
  double best_gap = -1.0;
  // 1-based k; the gap after lambda_k is values[k] - values[k-1].
  for (int k = 1; k < k_max && k < static_cast<int>(count); ++k) {
    const double gap = r.eigenvalues[static_cast<std::size_t>(k)] -
                       r.eigenvalues[static_cast<std::size_t>(k - 1)];
    if (gap > best_gap) {
      best_gap = gap;
      r.n_c = k;
    }
  }
  return r;
}

ClusterAssignment spectral_cluster(const Eigen::SparseMatrix<double>& affinity, int n_c,
                                   std::uint64_t seed, const SpectralOptions& options) {
  if (n_c < 1) throw ConfigError("spectral_cluster: n_c must be >= 1");
  if (n_c > affinity.rows()) {
    throw ConfigError("spectral_cluster: n_c = " + std::to_string(n_c) + " exceeds the " +
                      std::to_string(affinity.rows()) + " clustered columns");
  }
  std::vector<Eigen::Index> active;
  const auto lap = normalized_laplacian(affinity, active);
  if (static_cast<Eigen::Index>(active.size()) < n_c) {
    throw NumericalError("spectral_cluster: fewer connected columns than clusters");
  }
  const Eigen::Index count = std::min<Eigen::Index>(n_c + 1, lap.rows());
  EigenOptions eig = options.eigen;
  eig.seed = seed;
  const EigenPairs pairs = smallest_eigenpairs(lap, count, 2.0, eig);

  Eigen::MatrixXd embedding = pairs.vectors.leftCols(n_c);
  for (Eigen::Index i = 0; i < embedding.rows(); ++i) {
    const double norm = embedding.row(i).norm();
    if (norm > 0.0) embedding.row(i) /= norm;
  }
  KMeansOptions km = options.kmeans;
  km.seed = seed;
  const KMeansResult clusters = kmeans(embedding, n_c, km);

  ClusterAssignment out;
  out.labels.assign(static_cast<std::size_t>(affinity.rows()), kOutlier);
  for (std::size_t k = 0; k < active.size(); ++k) {
    out.labels[static_cast<std::size_t>(active[k])] = clusters.labels[k];
  }
  out.labels = canonical_labels(out.labels);
  std::set<int> distinct;
  for (int l : out.labels) {
    if (l != kOutlier) distinct.insert(l);
  }
  out.n_c = static_cast<int>(distinct.size());
  out.eigenvalues.assign(pairs.values.data(), pairs.values.data() + pairs.values.size());
  out.seed = seed;
  return out;
}

ClusterAssignment expand_to_dictionary(const ClusterAssignment& inlier_assignment,
                                       const SelfRepresentation& rep) {
  const auto inliers = rep.inlier_indices();
  if (inliers.size() != inlier_assignment.labels.size()) {
    throw ValidationError("expand_to_dictionary: label count does not match inlier count");
  }
  ClusterAssignment out = inlier_assignment;
  out.labels.assign(rep.size(), kOutlier);
  for (std::size_t k = 0; k < inliers.size(); ++k) out.labels[inliers[k]] = inlier_assignment.labels[k];
  return out;
}

void save_cluster_assignment(const ClusterAssignment& assignment, const std::filesystem::path& path) {
  write_json(path, assignment.to_json());
}

ClusterAssignment load_cluster_assignment(const std::filesystem::path& path) {
  return ClusterAssignment::from_json(read_json(path));
}

}  // namespace ssccd
