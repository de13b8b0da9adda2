#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <nlohmann/json.hpp>

#include "ssccd/tensor_io.hpp"

namespace ssccd {

/// Elastic-net self-representation settings. For column j the solver minimizes
///
///   tau*|c|_1 + (1 - tau)/2 * |c|_2^2 + gamma/2 * |x_j - X c|_2^2,  c_j = 0,
///
/// over unit-normalized dictionary columns X. Defaults are the discovery
/// settings used throughout (gamma 10, tau 1, two batches of 64 images,
/// 80% feature subsampling, outliers above the 0.75 quantile of column l1).
struct SolverConfig {
  double gamma = 10.0;
  double tau = 1.0;
  std::size_t n_batches = 2;
  std::size_t batch_size = 64;
  double feature_subsample_ratio = 0.8;
  double outlier_percentile = 0.75;
  std::uint64_t seed = 0;
  std::size_t max_iter = 1000;
  double tol = 1e-6;

  void validate() const;
  nlohmann::json to_json() const;
  static SolverConfig from_json(const nlohmann::json& j);
  static SolverConfig from_json(const nlohmann::json& j, const SolverConfig& defaults);
  bool operator==(const SolverConfig&) const = default;
};

/// Subsampled dictionary: column k is the feature vector at locations[k]
/// restricted to feature_coords.
struct Dictionary {
  Eigen::MatrixXd atoms;  // F' x n
  std::vector<Location> locations;
  std::vector<std::size_t> feature_coords;
};

struct SelfRepresentation {
  Eigen::SparseMatrix<double> coefficients;  // n x n, column j represents atom j
  Eigen::VectorXd column_l1;
  std::vector<bool> inlier_mask;
  std::vector<Location> dictionary_index;
  /// Quantile used for outlier flagging; nullopt before outlier removal.
  std::optional<double> outlier_threshold;

  std::size_t size() const { return inlier_mask.size(); }
  std::size_t inlier_count() const;
  std::vector<std::size_t> inlier_indices() const;
};

/// Draws n_batches * batch_size whole images and round(ratio * F) feature
/// coordinates without replacement. Deterministic for a fixed seed.
Dictionary subsample_dictionary(const FeatureStack& stack, const SolverConfig& cfg);

/// Drops all-zero columns (dead activations), which carry no direction.
Dictionary drop_zero_columns(const Dictionary& dictionary);

/// Result of a single column solve, exposed for diagnostics and tests.
struct ColumnSolution {
  std::vector<Eigen::Index> support;
  std::vector<double> values;
  std::vector<double> objective_history;  // one entry per completed sweep
  std::size_t sweeps = 0;
  bool converged = false;
};

/// Solves the elastic-net problem for column `j` of `normalized` (columns must
/// already have unit norm) with coordinate descent on a growing active set.
ColumnSolution solve_column(const Eigen::MatrixXd& normalized, Eigen::Index j,
                            const SolverConfig& cfg, bool record_history = false);

/// Objective value of coefficient vector `c` for column j.
double elastic_net_objective(const Eigen::MatrixXd& normalized, Eigen::Index j,
                             const Eigen::VectorXd& c, const SolverConfig& cfg);

/// Columns scaled to unit l2 norm; throws ValidationError on zero or
/// non-finite columns.
Eigen::MatrixXd normalize_columns(const Eigen::MatrixXd& atoms);

SelfRepresentation solve_self_representation(const Dictionary& dictionary, const SolverConfig& cfg);

/// Flags columns whose l1 norm strictly exceeds the outlier_percentile
/// quantile and re-solves on the remaining columns.
SelfRepresentation remove_outliers_and_refit(const SelfRepresentation& rep,
                                             const Dictionary& dictionary,
                                             const SolverConfig& cfg);

/// Linear-interpolation (type 7) sample quantile, p in [0, 1].
double quantile_linear(std::vector<double> values, double p);

/// Sparse triplet text file plus `<path>.json` sidecar.
void save_self_representation(const SelfRepresentation& rep, const SolverConfig& cfg,
                              const std::filesystem::path& path);
SelfRepresentation load_self_representation(const std::filesystem::path& path);

}  // namespace ssccd
