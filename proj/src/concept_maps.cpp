#include "ssccd/concept_maps.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ssccd/error.hpp"
#include "ssccd/npy.hpp"

namespace ssccd {

double Grid::min() const { return *std::min_element(values.begin(), values.end()); }
double Grid::max() const { return *std::max_element(values.begin(), values.end()); }

std::size_t ConceptMask::count() const {
  return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](std::uint8_t v) { return v != 0; }));
}

double normalized_proximity(double proximity, double threshold) {
  if (threshold > 0.0) return proximity / threshold;
  return proximity > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
}

namespace {

Grid angle_grid(const FeatureStack& stack, std::size_t sample, const Eigen::MatrixXd& basis) {
  if (static_cast<Eigen::Index>(stack.features()) != basis.rows()) {
    throw ValidationError("concept has F = " + std::to_string(basis.rows()) +
                          " but the feature stack has F = " + std::to_string(stack.features()));
  }
  if (sample >= stack.num_samples()) throw ValidationError("sample index out of range");
  Grid g(stack.height(), stack.width());
  for (std::size_t r = 0; r < stack.height(); ++r) {
    for (std::size_t c = 0; c < stack.width(); ++c) {
      g(r, c) = first_angle(stack.vector_at({sample, r, c}), basis);
    }
  }
  return g;
}

struct Tap {
  std::size_t lo, hi;
  double frac;
};

std::vector<Tap> taps(std::size_t in, std::size_t out) {
  std::vector<Tap> t(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    t[i] = {lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
  }
  return t;
}

ConceptMask make_mask(const ConceptMap& map, const Grid& grid, double threshold, Space space) {
  ConceptMask m;
  m.concept_id = map.concept_id;
  m.sample_id = map.sample_id;
  m.space = space;
  m.rows = grid.rows;
  m.cols = grid.cols;
  m.mask.resize(grid.values.size());
  for (std::size_t i = 0; i < grid.values.size(); ++i) m.mask[i] = grid.values[i] < threshold ? 1 : 0;
  return m;
}

std::vector<float> to_f32(const std::vector<ConceptMap>& maps, bool input) {
  std::vector<float> out;
  for (const auto& m : maps) {
    const Grid& g = input ? *m.upsampled : m.angles;
    for (double v : g.values) out.push_back(static_cast<float>(v));
  }
  return out;
}

}  // namespace

ConceptMap concept_map(const FeatureStack& stack, std::size_t sample, const ConceptSubspace& subspace) {
  ConceptMap m;
  m.concept_id = subspace.concept_id;
  m.angles = angle_grid(stack, sample, subspace.basis);
  m.sample_id = stack.manifest().sample_ids[sample];
  m.proximity = m.angles.min();
  m.normalized_proximity = normalized_proximity(m.proximity, subspace.threshold_angle);
  return m;
}

Grid upsample_bilinear(const Grid& grid, std::size_t rows, std::size_t cols) {
  if (rows < grid.rows || cols < grid.cols) {
    throw ValidationError("upsample_bilinear: target " + std::to_string(rows) + "x" + std::to_string(cols) +
                          " is smaller than source " + std::to_string(grid.rows) + "x" +
                          std::to_string(grid.cols));
  }
  const auto ty = taps(grid.rows, rows);
  const auto tx = taps(grid.cols, cols);
  Grid out(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const Tap& y = ty[i];
    for (std::size_t j = 0; j < cols; ++j) {
      const Tap& x = tx[j];
      const double top = (1.0 - x.frac) * grid(y.lo, x.lo) + x.frac * grid(y.lo, x.hi);
      const double bottom = (1.0 - x.frac) * grid(y.hi, x.lo) + x.frac * grid(y.hi, x.hi);
      out(i, j) = (1.0 - y.frac) * top + y.frac * bottom;
    }
  }
  return out;
}

ConceptMap upsample_bilinear(const ConceptMap& map, std::size_t rows, std::size_t cols) {
  ConceptMap out = map;
  out.upsampled = upsample_bilinear(map.angles, rows, cols);
  return out;
}

ConceptMask binarize(const ConceptMap& map, const ConceptSubspace& subspace, Space space) {
  if (map.concept_id != subspace.concept_id) {
    throw ValidationError("binarize: map of '" + map.concept_id + "' paired with concept '" +
                          subspace.concept_id + "'");
  }
  if (space == Space::kInput) {
    if (!map.upsampled) throw ValidationError("binarize: input-space mask requires an upsampled map");
    return make_mask(map, *map.upsampled, subspace.threshold_angle, space);
  }
  return make_mask(map, map.angles, subspace.threshold_angle, space);
}

ConceptMask pca_baseline_mask(const FeatureStack& stack, std::size_t sample,
                              const Eigen::VectorXd& direction, double train_min_proximity,
                              const std::string& concept_id) {
  if (std::abs(direction.norm() - 1.0) > 1e-6) {
    throw ValidationError("pca_baseline_mask: direction must have unit norm");
  }
  ConceptMap map;
  map.concept_id = concept_id;
  map.sample_id = stack.manifest().sample_ids.at(sample);
  map.angles = angle_grid(stack, sample, direction);
  return make_mask(map, map.angles, kPcaBaselineFactor * train_min_proximity, Space::kFeature);
}

std::vector<Eigen::VectorXd> pca_baseline_directions(const FeatureStack& stack, std::size_t count,
                                                     bool centered) {
  const LocationMatrix flat = flatten_locations(stack);
  Eigen::MatrixXd data = flat.features;
  if (centered) data.colwise() -= data.rowwise().mean();
  const Eigen::MatrixXd gram = data * data.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  if (count > stack.features()) throw ConfigError("pca_baseline_directions: more directions than features");
  std::vector<Eigen::VectorXd> out;
  for (std::size_t k = 0; k < count; ++k) {
    Eigen::VectorXd v = es.eigenvectors().col(gram.cols() - 1 - static_cast<Eigen::Index>(k));
    // Fix the sign so the largest-magnitude entry is positive.
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    out.push_back(v.normalized());
  }
  return out;
}

double train_min_proximity(const FeatureStack& stack, const Eigen::VectorXd& direction) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < stack.num_samples(); ++s) {
    best = std::min(best, angle_grid(stack, s, direction).min());
  }
  return best;
}

std::vector<std::size_t> rank_samples_by_proximity(const std::vector<ConceptMap>& maps) {
  for (const auto& m : maps) {
    if (m.concept_id != maps.front().concept_id) {
      throw ValidationError("rank_samples_by_proximity: maps belong to different concepts");
    }
  }
  std::vector<std::size_t> order(maps.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (maps[a].proximity != maps[b].proximity) return maps[a].proximity < maps[b].proximity;
    return maps[a].sample_id < maps[b].sample_id;
  });
  return order;
}

ConceptMapSet compute_map_set(const FeatureStack& stack, const ConceptSubspace& subspace,
                              bool upsample_to_input) {
  ConceptMapSet set;
  set.concept_id = subspace.concept_id;
  set.threshold_angle = subspace.threshold_angle;
  for (std::size_t s = 0; s < stack.num_samples(); ++s) {
    ConceptMap m = concept_map(stack, s, subspace);
    if (upsample_to_input) {
      m = upsample_bilinear(m, stack.manifest().input_height, stack.manifest().input_width);
    }
    set.maps.push_back(std::move(m));
  }
  return set;
}

void save_map_set(const ConceptMapSet& set, const std::filesystem::path& dir) {
  if (set.maps.empty()) throw ValidationError("save_map_set: no maps");
  std::filesystem::create_directories(dir);
  const auto n = set.maps.size();
  const auto& first = set.maps.front();
  ConceptSubspace threshold_only;
  threshold_only.concept_id = set.concept_id;
  threshold_only.threshold_angle = set.threshold_angle;

  auto write_pair = [&](bool input) {
    const Grid& g = input ? *first.upsampled : first.angles;
    const std::vector<std::size_t> shape{n, g.rows, g.cols};
    const std::string tag = input ? "input" : "feature";
    npy::write_f32(dir / (set.concept_id + (input ? ".angles_input.npy" : ".angles.npy")), shape,
                   to_f32(set.maps, input));
    std::vector<std::uint8_t> masks;
    for (const auto& m : set.maps) {
      const auto mask = binarize(m, threshold_only, input ? Space::kInput : Space::kFeature);
      masks.insert(masks.end(), mask.mask.begin(), mask.mask.end());
    }
    npy::write_u8(dir / (set.concept_id + ".mask_" + tag + ".npy"), shape, masks);
  };
  write_pair(false);
  if (first.upsampled) write_pair(true);

  nlohmann::json j;
  j["concept_id"] = set.concept_id;
  j["threshold_angle"] = set.threshold_angle;
  std::vector<std::string> ids;
  std::vector<double> prox;
  for (const auto& m : set.maps) {
    ids.push_back(m.sample_id);
    prox.push_back(m.proximity);
  }
  j["sample_ids"] = ids;
  j["proximity"] = prox;
  nlohmann::json nj = nlohmann::json::array();
  for (const auto& m : set.maps) {
    nj.push_back(std::isfinite(m.normalized_proximity) ? nlohmann::json(m.normalized_proximity)
                                                        : nlohmann::json("inf"));
  }
  j["normalized_proximity"] = nj;
  j["has_input_resolution"] = first.upsampled.has_value();
  write_json(dir / (set.concept_id + ".maps.json"), j);
}

StoredMaps load_map_summary(const std::filesystem::path& dir, const std::string& concept_id) {
  const auto path = dir / (concept_id + ".maps.json");
  if (!std::filesystem::exists(path)) {
    throw MissingArtifactError("concept maps for '" + concept_id + "' not found: " + path.string());
  }
  const nlohmann::json j = read_json(path);
  StoredMaps s;
  try {
    s.concept_id = j.at("concept_id").get<std::string>();
    s.threshold_angle = j.at("threshold_angle").get<double>();
    s.sample_ids = j.at("sample_ids").get<std::vector<std::string>>();
    s.proximity = j.at("proximity").get<std::vector<double>>();
    for (const auto& v : j.at("normalized_proximity")) {
      s.normalized_proximity.push_back(v.is_string() ? std::numeric_limits<double>::infinity()
                                                     : v.get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("map sidecar " + path.string() + ": " + e.what());
  }
  return s;
}

std::vector<ConceptMask> load_masks(const std::filesystem::path& dir, const std::string& concept_id,
                                    Space space) {
  const auto path = dir / (concept_id + ".mask_" + to_string(space) + ".npy");
  if (!std::filesystem::exists(path)) {
    throw MissingArtifactError(to_string(space) + "-space masks for '" + concept_id +
                               "' not found: " + path.string());
  }
  const StoredMaps summary = load_map_summary(dir, concept_id);
  const npy::Array arr = npy::read(path);
  if (arr.shape.size() != 3 || arr.shape[0] != summary.sample_ids.size()) {
    throw ValidationError("mask tensor shape does not match its sidecar: " + path.string());
  }
  const std::vector<std::uint8_t> data = npy::as_u8(arr);
  const std::size_t cells = arr.shape[1] * arr.shape[2];
  std::vector<ConceptMask> out;
  for (std::size_t s = 0; s < arr.shape[0]; ++s) {
    ConceptMask m;
    m.concept_id = concept_id;
    m.sample_id = summary.sample_ids[s];
    m.space = space;
    m.rows = arr.shape[1];
    m.cols = arr.shape[2];
    m.mask.assign(data.begin() + static_cast<std::ptrdiff_t>(s * cells),
                  data.begin() + static_cast<std::ptrdiff_t>((s + 1) * cells));
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace ssccd
