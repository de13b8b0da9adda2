#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace ssccd {

enum class Split { kTrain, kTest };
enum class Space { kInput, kFeature };

std::string to_string(Split split);
std::string to_string(Space space);
Split parse_split(const std::string& s);
Space parse_space(const std::string& s);

/// Metadata shared by every tensor exchanged with the feature extractor.
struct Manifest {
  std::string dataset_name;
  std::vector<std::string> class_labels;
  std::vector<std::string> sample_ids;
  std::string layer_id;
  std::size_t height = 0;  // H
  std::size_t width = 0;   // W
  std::size_t features = 0;  // F
  std::size_t input_height = 0;  // H_in
  std::size_t input_width = 0;   // W_in
  Split split = Split::kTrain;

  std::size_t num_samples() const { return sample_ids.size(); }

  /// Throws ValidationError on empty/duplicate sample ids or zero extents.
  void validate() const;

  nlohmann::json to_json() const;
  static Manifest from_json(const nlohmann::json& j);

  bool operator==(const Manifest&) const = default;
};

/// A (sample, row, column) triple addressing one spatial feature vector.
struct Location {
  std::size_t sample = 0;
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const Location&) const = default;
};

/// N x H x W x F activations, row-major, immutable after construction.
class FeatureStack {
 public:
  FeatureStack(Manifest manifest, std::vector<float> data);

  const Manifest& manifest() const { return manifest_; }
  std::span<const float> data() const { return data_; }
  std::size_t num_samples() const { return manifest_.num_samples(); }
  std::size_t height() const { return manifest_.height; }
  std::size_t width() const { return manifest_.width; }
  std::size_t features() const { return manifest_.features; }
  std::size_t locations_per_sample() const { return height() * width(); }

  std::span<const float> at(std::size_t sample, std::size_t row, std::size_t col) const;
  std::span<const float> at(const Location& loc) const { return at(loc.sample, loc.row, loc.col); }
  Eigen::VectorXd vector_at(const Location& loc) const;

 private:
  Manifest manifest_;
  std::vector<float> data_;
};

/// Per-pixel (input space) or per-location (feature space) attributions.
class AttributionStack {
 public:
  AttributionStack(Manifest manifest, Space space, std::string method_tag, std::vector<float> data);

  const Manifest& manifest() const { return manifest_; }
  Space space() const { return space_; }
  const std::string& method_tag() const { return method_tag_; }
  std::span<const float> data() const { return data_; }
  std::size_t rows() const;
  std::size_t cols() const;
  /// rows() x cols() grid for one sample.
  std::span<const float> sample(std::size_t index) const;

 private:
  Manifest manifest_;
  Space space_;
  std::string method_tag_;
  std::vector<float> data_;
};

/// `<name>.npy` -> `<name>.manifest.json`; accepts the base name without extension too.
std::filesystem::path manifest_path_for(const std::filesystem::path& tensor_path);
std::filesystem::path tensor_path_for(const std::filesystem::path& path);

FeatureStack load_feature_stack(const std::filesystem::path& path);
void save_feature_stack(const FeatureStack& stack, const std::filesystem::path& path);

AttributionStack load_attribution_stack(const std::filesystem::path& path);
void save_attribution_stack(const AttributionStack& stack, const std::filesystem::path& path);

/// Feature vectors as columns of an F x (N*H*W) matrix, sample-major then
/// row-major over the spatial grid.
struct LocationMatrix {
  Eigen::MatrixXd features;
  std::vector<Location> index;
};

LocationMatrix flatten_locations(const FeatureStack& stack);

/// Column of `loc` in flatten_locations' ordering.
std::size_t column_of(const FeatureStack& stack, const Location& loc);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace ssccd
