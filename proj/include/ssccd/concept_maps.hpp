#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ssccd/subspace.hpp"
#include "ssccd/tensor_io.hpp"

namespace ssccd {

/// Row-major 2-D grid of doubles.
struct Grid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Grid() = default;
  Grid(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}
  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  double min() const;
  double max() const;
};

struct ConceptMap {
  std::string concept_id;
  std::string sample_id;
  Grid angles;                    // feature resolution, radians in [0, pi/2]
  std::optional<Grid> upsampled;  // input resolution
  double proximity = 0.0;         // min angle over the feature grid
  double normalized_proximity = 0.0;
};

struct ConceptMask {
  std::string concept_id;
  std::string sample_id;
  Space space = Space::kFeature;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> mask;

  std::size_t count() const;
  bool empty() const { return count() == 0; }
};

/// proximity / threshold. A zero threshold can never activate a strict
/// mask, so it maps to +inf (or exactly 1 when the proximity is also 0).
double normalized_proximity(double proximity, double threshold);

ConceptMap concept_map(const FeatureStack& stack, std::size_t sample, const ConceptSubspace& subspace);

/// Half-pixel-centre bilinear resize with edge clamping:
/// src = (i + 0.5) * in / out - 0.5, clamped to [0, in - 1].
Grid upsample_bilinear(const Grid& grid, std::size_t rows, std::size_t cols);
ConceptMap upsample_bilinear(const ConceptMap& map, std::size_t rows, std::size_t cols);

/// mask[p] = angle[p] < threshold_angle, at feature or input resolution.
ConceptMask binarize(const ConceptMap& map, const ConceptSubspace& subspace, Space space);

/// ICE-style baseline: mask[p] = angle[p] < 1.2 * train_min_proximity for a
/// unit direction obtained by plain PCA over feature vectors.
inline constexpr double kPcaBaselineFactor = 1.2;
ConceptMask pca_baseline_mask(const FeatureStack& stack, std::size_t sample,
                              const Eigen::VectorXd& direction, double train_min_proximity,
                              const std::string& concept_id = "pca");

/// Leading principal directions of all feature vectors of a stack.
std::vector<Eigen::VectorXd> pca_baseline_directions(const FeatureStack& stack, std::size_t count,
                                                     bool centered = false);

/// Smallest sample-concept proximity of a 1-D direction over every sample of `stack`.
double train_min_proximity(const FeatureStack& stack, const Eigen::VectorXd& direction);

/// Indices into `maps`, ascending by proximity; ties by sample_id.
std::vector<std::size_t> rank_samples_by_proximity(const std::vector<ConceptMap>& maps);

/// All maps of one concept over a stack, in sample order.
struct ConceptMapSet {
  std::string concept_id;
  double threshold_angle = 0.0;
  std::vector<ConceptMap> maps;
};

ConceptMapSet compute_map_set(const FeatureStack& stack, const ConceptSubspace& subspace,
                              bool upsample_to_input = true);

/// Writes `<id>.angles.npy`, `<id>.mask_feature.npy` and, when upsampled,
/// `<id>.angles_input.npy` / `<id>.mask_input.npy`, plus `<id>.maps.json`.
void save_map_set(const ConceptMapSet& set, const std::filesystem::path& dir);

struct StoredMaps {
  std::string concept_id;
  double threshold_angle = 0.0;
  std::vector<std::string> sample_ids;
  std::vector<double> proximity;
  std::vector<double> normalized_proximity;
};
StoredMaps load_map_summary(const std::filesystem::path& dir, const std::string& concept_id);
std::vector<ConceptMask> load_masks(const std::filesystem::path& dir, const std::string& concept_id,
                                    Space space);

}  // namespace ssccd
