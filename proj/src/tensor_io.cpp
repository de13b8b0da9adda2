#include "ssccd/tensor_io.hpp"

#include <cmath>
#include <fstream>
#include <unordered_set>

#include "ssccd/error.hpp"
#include "ssccd/npy.hpp"

namespace ssccd {

namespace {

void require_finite(std::span<const float> data, const std::string& what) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw ValidationError(what + ": non-finite entry at flat index " + std::to_string(i));
    }
  }
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

}  // namespace

std::string to_string(Split split) { return split == Split::kTrain ? "train" : "test"; }
std::string to_string(Space space) { return space == Space::kInput ? "input" : "feature"; }

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw ValidationError("unknown split '" + s + "'");
}

Space parse_space(const std::string& s) {
  if (s == "input") return Space::kInput;
  if (s == "feature") return Space::kFeature;
  throw ValidationError("unknown space '" + s + "'");
}

void Manifest::validate() const {
  if (sample_ids.empty()) throw ValidationError("manifest: sample_ids is empty");
  if (height == 0 || width == 0 || features == 0) {
    throw ValidationError("manifest: feature_shape entries must be positive");
  }
  if (input_height == 0 || input_width == 0) {
    throw ValidationError("manifest: input_shape entries must be positive");
  }
  std::unordered_set<std::string> seen;
  for (const auto& id : sample_ids) {
    if (!seen.insert(id).second) throw ValidationError("manifest: duplicate sample id '" + id + "'");
  }
}

nlohmann::json Manifest::to_json() const {
  return nlohmann::json{
      {"dataset_name", dataset_name},
      {"class_labels", class_labels},
      {"sample_ids", sample_ids},
      {"layer_id", layer_id},
      {"feature_shape", {height, width, features}},
      {"input_shape", {input_height, input_width}},
      {"split", to_string(split)},
  };
}

Manifest Manifest::from_json(const nlohmann::json& j) {
  Manifest m;
  try {
    m.dataset_name = j.at("dataset_name").get<std::string>();
    m.class_labels = j.at("class_labels").get<std::vector<std::string>>();
    m.sample_ids = j.at("sample_ids").get<std::vector<std::string>>();
    m.layer_id = j.at("layer_id").get<std::string>();
    const auto fs = j.at("feature_shape").get<std::vector<long long>>();
    const auto is = j.at("input_shape").get<std::vector<long long>>();
    if (fs.size() != 3) throw ValidationError("manifest: feature_shape must have 3 entries");
    if (is.size() != 2) throw ValidationError("manifest: input_shape must have 2 entries");
    for (long long v : fs) {
      if (v <= 0) throw ValidationError("manifest: feature_shape entries must be positive");
    }
    for (long long v : is) {
      if (v <= 0) throw ValidationError("manifest: input_shape entries must be positive");
    }
    m.height = static_cast<std::size_t>(fs[0]);
    m.width = static_cast<std::size_t>(fs[1]);
    m.features = static_cast<std::size_t>(fs[2]);
    m.input_height = static_cast<std::size_t>(is[0]);
    m.input_width = static_cast<std::size_t>(is[1]);
    m.split = parse_split(j.at("split").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("manifest: ") + e.what());
  }
  m.validate();
  return m;
}

FeatureStack::FeatureStack(Manifest manifest, std::vector<float> data)
    : manifest_(std::move(manifest)), data_(std::move(data)) {
  manifest_.validate();
  const std::size_t expected =
      manifest_.num_samples() * manifest_.height * manifest_.width * manifest_.features;
  if (data_.size() != expected) {
    throw ValidationError("feature stack: " + std::to_string(data_.size()) +
                          " values do not match manifest shape (" +
                          std::to_string(expected) + " expected)");
  }
  require_finite(data_, "feature stack");
}

std::span<const float> FeatureStack::at(std::size_t sample, std::size_t row, std::size_t col) const {
  const std::size_t offset =
      ((sample * height() + row) * width() + col) * features();
  return std::span<const float>(data_).subspan(offset, features());
}

Eigen::VectorXd FeatureStack::vector_at(const Location& loc) const {
  const auto v = at(loc);
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

AttributionStack::AttributionStack(Manifest manifest, Space space, std::string method_tag,
                                   std::vector<float> data)
    : manifest_(std::move(manifest)),
      space_(space),
      method_tag_(std::move(method_tag)),
      data_(std::move(data)) {
  manifest_.validate();
  if (data_.size() != manifest_.num_samples() * rows() * cols()) {
    throw ValidationError("attribution stack: data size does not match " + to_string(space_) +
                          "-space shape declared by the manifest");
  }
  require_finite(data_, "attribution stack");
}

std::size_t AttributionStack::rows() const {
  return space_ == Space::kInput ? manifest_.input_height : manifest_.height;
}
std::size_t AttributionStack::cols() const {
  return space_ == Space::kInput ? manifest_.input_width : manifest_.width;
}
std::span<const float> AttributionStack::sample(std::size_t index) const {
  return std::span<const float>(data_).subspan(index * rows() * cols(), rows() * cols());
}

std::filesystem::path tensor_path_for(const std::filesystem::path& path) {
  if (path.extension() == ".npy") return path;
  auto p = path;
  p += ".npy";
  return p;
}

std::filesystem::path manifest_path_for(const std::filesystem::path& tensor_path) {
  auto p = tensor_path_for(tensor_path);
  p.replace_extension(".manifest.json");
  return p;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open JSON file: " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

FeatureStack load_feature_stack(const std::filesystem::path& path) {
  const auto tensor = tensor_path_for(path);
  Manifest manifest = Manifest::from_json(read_json(manifest_path_for(tensor)));
  npy::Array array = npy::read(tensor);
  const std::vector<std::size_t> expected{manifest.num_samples(), manifest.height, manifest.width,
                                          manifest.features};
  if (array.shape != expected) {
    throw ValidationError("feature stack " + tensor.string() + ": tensor shape " +
                          shape_string(array.shape) + " does not match manifest " +
                          shape_string(expected));
  }
  return FeatureStack(std::move(manifest), npy::as_f32(array));
}

void save_feature_stack(const FeatureStack& stack, const std::filesystem::path& path) {
  const auto tensor = tensor_path_for(path);
  const auto& m = stack.manifest();
  const std::vector<std::size_t> shape{m.num_samples(), m.height, m.width, m.features};
  npy::write_f32(tensor, shape, stack.data());
  write_json(manifest_path_for(tensor), m.to_json());
}

AttributionStack load_attribution_stack(const std::filesystem::path& path) {
  const auto tensor = tensor_path_for(path);
  const nlohmann::json j = read_json(manifest_path_for(tensor));
  Manifest manifest = Manifest::from_json(j);
  Space space;
  std::string tag;
  try {
    space = parse_space(j.at("space").get<std::string>());
    tag = j.at("method_tag").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("attribution manifest " + tensor.string() + ": " + e.what());
  }
  npy::Array array = npy::read(tensor);
  const std::vector<std::size_t> expected =
      space == Space::kInput
          ? std::vector<std::size_t>{manifest.num_samples(), manifest.input_height, manifest.input_width}
          : std::vector<std::size_t>{manifest.num_samples(), manifest.height, manifest.width};
  if (array.shape != expected) {
    throw ValidationError("attribution stack " + tensor.string() + ": tensor shape " +
                          shape_string(array.shape) + " does not match manifest " +
                          shape_string(expected));
  }
  return AttributionStack(std::move(manifest), space, std::move(tag), npy::as_f32(array));
}

void save_attribution_stack(const AttributionStack& stack, const std::filesystem::path& path) {
  const auto tensor = tensor_path_for(path);
  const std::vector<std::size_t> shape{stack.manifest().num_samples(), stack.rows(), stack.cols()};
  npy::write_f32(tensor, shape, stack.data());
  nlohmann::json j = stack.manifest().to_json();
  j["space"] = to_string(stack.space());
  j["method_tag"] = stack.method_tag();
  write_json(manifest_path_for(tensor), j);
}

LocationMatrix flatten_locations(const FeatureStack& stack) {
  const std::size_t n = stack.num_samples() * stack.locations_per_sample();
  const auto f = static_cast<Eigen::Index>(stack.features());
  LocationMatrix out;
  out.features.resize(f, static_cast<Eigen::Index>(n));
  out.index.reserve(n);
  // Row-major storage already matches sample-major, row-major location order.
  Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic>> raw(
      stack.data().data(), f, static_cast<Eigen::Index>(n));
  out.features = raw.cast<double>();
  for (std::size_t s = 0; s < stack.num_samples(); ++s) {
    for (std::size_t r = 0; r < stack.height(); ++r) {
      for (std::size_t c = 0; c < stack.width(); ++c) out.index.push_back({s, r, c});
    }
  }
  return out;
}

std::size_t column_of(const FeatureStack& stack, const Location& loc) {
  return (loc.sample * stack.height() + loc.row) * stack.width() + loc.col;
}

}  // namespace ssccd
