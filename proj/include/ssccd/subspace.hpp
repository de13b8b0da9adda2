#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace ssccd {

struct ConceptProvenance {
  std::string dataset_name;
  std::vector<std::string> class_labels;
  std::string layer_id;
  std::uint64_t seed = 0;
  int cluster_label = -1;

  nlohmann::json to_json() const;
  static ConceptProvenance from_json(const nlohmann::json& j);
  bool operator==(const ConceptProvenance&) const = default;
};

/// A concept: linear subspace of feature space with an orthonormal basis.
struct ConceptSubspace {
  Eigen::MatrixXd basis;  // F x d, orthonormal columns
  double threshold_angle = 0.0;  // median first principal angle of the members
  std::size_t member_count = 0;
  std::string concept_id;
  ConceptProvenance source;
  /// PCA eigenvalues of the member matrix, descending (all of them, not only the kept d).
  std::vector<double> spectrum;

  Eigen::Index intrinsic_dim() const { return basis.cols(); }
  Eigen::Index feature_dim() const { return basis.rows(); }
};

struct BasisOptions {
  /// Fukunaga-Olsen ratio: keep components with eigenvalue > alpha_fo * largest.
  double alpha_fo = 0.05;
  /// Subtract the member mean before PCA (off by default: concepts pass through the origin).
  bool centered = false;
};

/// First principal angle between span{v} and the column span of the
/// orthonormal `basis`; zero vectors are at pi/2.
double first_angle(const Eigen::Ref<const Eigen::VectorXd>& v, const Eigen::MatrixXd& basis);

/// PCA basis of the member columns (F x m) truncated at the intrinsic dimension.
ConceptSubspace fit_concept_basis(const Eigen::MatrixXd& members, const BasisOptions& options = {});

/// Principal angles between the column spans of two orthonormal bases,
/// ascending, min(d_A, d_B) of them. Small angles are taken from sines for accuracy.
Eigen::VectorXd principal_angles(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);
Eigen::VectorXd principal_angles(const ConceptSubspace& a, const ConceptSubspace& b);

/// l2 norm of the principal-angle vector.
double grassmann_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);
double grassmann_distance(const ConceptSubspace& a, const ConceptSubspace& b);

struct SimilarityMatrix {
  std::vector<std::string> concept_ids;
  Eigen::MatrixXd distances;
  /// Concept indices sorted by distance to the anchor (anchor first).
  std::vector<std::size_t> anchor_order;
  std::size_t anchor = 0;

  /// Rows/columns permuted into anchor order.
  SimilarityMatrix sorted() const;
};

SimilarityMatrix similarity_matrix(const std::vector<ConceptSubspace>& concepts, std::size_t anchor = 0);

/// Truncates to the leading principal direction and recomputes the threshold
/// angle over `members` (F x m).
ConceptSubspace reduce_to_1d(const ConceptSubspace& subspace, const Eigen::MatrixXd& members);

double median(std::vector<double> values);

// Persistence: `<dir>/<id>.npy` (float64 basis) + `<dir>/<id>.json`, and a
// `<dir>/bank.json` index listing the concept ids in order.
void save_concept(const ConceptSubspace& subspace, const std::filesystem::path& dir);
ConceptSubspace load_concept(const std::filesystem::path& dir, const std::string& concept_id);
void save_concept_bank(const std::vector<ConceptSubspace>& bank, const std::filesystem::path& dir);
std::vector<ConceptSubspace> load_concept_bank(const std::filesystem::path& dir);

void write_similarity_csv(const SimilarityMatrix& sim, const std::filesystem::path& path);

}  // namespace ssccd
