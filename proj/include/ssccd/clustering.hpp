#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <nlohmann/json.hpp>

#include "ssccd/eigensolver.hpp"
#include "ssccd/kmeans.hpp"
#include "ssccd/ssc_solver.hpp"

namespace ssccd {

inline constexpr int kOutlier = -1;

struct ClusterAssignment {
  std::vector<int> labels;  // kOutlier or 0..n_c-1
  int n_c = 0;
  std::vector<double> eigenvalues;  // ascending Laplacian spectrum prefix
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static ClusterAssignment from_json(const nlohmann::json& j);
};

struct SpectralOptions {
  EigenOptions eigen;
  KMeansOptions kmeans;
};

/// W = |C| + |C^T| restricted to the inlier columns, in inlier order.
Eigen::SparseMatrix<double> build_affinity(const SelfRepresentation& rep);

/// I - D^{-1/2} W D^{-1/2} over the vertices with positive degree.
/// `active` receives the affinity indices that were kept.
Eigen::SparseMatrix<double> normalized_laplacian(const Eigen::SparseMatrix<double>& affinity,
                                                 std::vector<Eigen::Index>& active);

struct EigengapResult {
  int n_c = 1;
  std::vector<double> eigenvalues;  // first k_max + 1 (or fewer if the graph is smaller)
};

/// n_c = argmax_{1 <= k < k_max} (lambda_{k+1} - lambda_k), earliest on ties.
EigengapResult select_cluster_count(const Eigen::SparseMatrix<double>& affinity, int k_max = 10,
                                    const SpectralOptions& options = {});

/// Ng-Jordan-Weiss spectral clustering. Labels index the affinity's vertices;
/// zero-degree vertices are labelled kOutlier.
ClusterAssignment spectral_cluster(const Eigen::SparseMatrix<double>& affinity, int n_c,
                                   std::uint64_t seed, const SpectralOptions& options = {});

/// Lifts labels over inlier columns back to all columns of `rep`, marking
/// outliers with kOutlier.
ClusterAssignment expand_to_dictionary(const ClusterAssignment& inlier_assignment,
                                       const SelfRepresentation& rep);

void save_cluster_assignment(const ClusterAssignment& assignment, const std::filesystem::path& path);
ClusterAssignment load_cluster_assignment(const std::filesystem::path& path);

}  // namespace ssccd
