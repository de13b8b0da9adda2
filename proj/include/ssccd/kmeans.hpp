#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace ssccd {

struct KMeansOptions {
  int restarts = 10;
  int max_iter = 300;
  double rel_tol = 1e-6;
  std::uint64_t seed = 0;
};

struct KMeansResult {
  std::vector<int> labels;
  Eigen::MatrixXd centers;  // k x dim
  double inertia = 0.0;
};

/// Lloyd's algorithm with k-means++ seeding; rows of `points` are observations.
/// Keeps the restart with the lowest inertia (earliest on ties).
KMeansResult kmeans(const Eigen::MatrixXd& points, int k, const KMeansOptions& options = {});

/// Relabels so that labels appear in order of first occurrence; negative
/// labels are left untouched.
std::vector<int> canonical_labels(const std::vector<int>& labels);

}  // namespace ssccd
