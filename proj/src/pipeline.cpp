#include "ssccd/pipeline.hpp"

#include <set>

#include "ssccd/error.hpp"
#include "ssccd/random.hpp"

namespace ssccd {
namespace {

const std::set<std::string> kKnownKeys = {
    "gamma",    "tau",         "n_batches",    "batch_size", "feature_subsample_ratio", "outlier_percentile",
    "seed",     "max_iter",    "tol",          "n_concepts", "k_max",                   "alpha_fo",
    "centered", "layer_id",    "concept_prefix", "features", "attributions",            "relevance",
    "results",  "output",      "upsample",     "anchor"};

template <typename T>
T value_or(const nlohmann::json& j, const char* key, const T& fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

void RunConfig::validate() const {
  solver.validate();
  if (n_concepts && *n_concepts < 1) throw ConfigError("n_concepts must be a positive integer or \"eigengap\"");
  if (k_max < 2) throw ConfigError("k_max must be at least 2");
  if (!(alpha_fo > 0.0 && alpha_fo < 1.0)) throw ConfigError("alpha_fo must lie in (0, 1)");
  if (concept_prefix.empty()) throw ConfigError("concept_prefix must not be empty");
  if (output.empty()) throw ConfigError("output must not be empty");
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = solver.to_json();
  j["n_concepts"] = n_concepts ? nlohmann::json(*n_concepts) : nlohmann::json("eigengap");
  j["k_max"] = k_max;
  j["alpha_fo"] = alpha_fo;
  j["centered"] = centered;
  j["layer_id"] = layer_id;
  j["concept_prefix"] = concept_prefix;
  j["features"] = features;
  j["attributions"] = attributions;
  j["relevance"] = relevance;
  j["results"] = results;
  j["output"] = output;
  j["upsample"] = upsample;
  j["anchor"] = anchor;
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!kKnownKeys.count(key)) throw ConfigError("unknown run config key '" + key + "'");
  }
  RunConfig c;
  c.solver = SolverConfig::from_json(j);
  try {
    if (j.contains("n_concepts")) {
      const auto& n = j.at("n_concepts");
      if (n.is_string()) {
        if (n.get<std::string>() != "eigengap") throw ConfigError("n_concepts must be an integer or \"eigengap\"");
        c.n_concepts.reset();
      } else {
        c.n_concepts = n.get<int>();
      }
    }
    c.k_max = value_or(j, "k_max", c.k_max);
    c.alpha_fo = value_or(j, "alpha_fo", c.alpha_fo);
    c.centered = value_or(j, "centered", c.centered);
    c.layer_id = value_or(j, "layer_id", c.layer_id);
    c.concept_prefix = value_or(j, "concept_prefix", c.concept_prefix);
    c.features = value_or(j, "features", c.features);
    c.attributions = value_or(j, "attributions", c.attributions);
    c.relevance = value_or(j, "relevance", c.relevance);
    c.results = value_or(j, "results", c.results);
    c.output = value_or(j, "output", c.output);
    c.upsample = value_or(j, "upsample", c.upsample);
    c.anchor = value_or(j, "anchor", c.anchor);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  c.validate();
  return c;
}

DiscoveryResult discover(const FeatureStack& stack, const RunConfig& config) {
  config.validate();
  if (!config.layer_id.empty() && config.layer_id != stack.manifest().layer_id) {
    throw ConfigError("layer_id '" + config.layer_id + "' does not match the feature stack's '" +
                      stack.manifest().layer_id + "'");
  }
  DiscoveryResult result;
  result.dictionary = drop_zero_columns(subsample_dictionary(stack, config.solver));
  if (result.dictionary.atoms.cols() < 2) throw ValidationError("discover: fewer than two non-zero dictionary columns");

  const SelfRepresentation first = solve_self_representation(result.dictionary, config.solver);
  result.representation = remove_outliers_and_refit(first, result.dictionary, config.solver);

  const Eigen::SparseMatrix<double> affinity = build_affinity(result.representation);
  SpectralOptions options;
  options.eigen.seed = derive_seed(config.seed(), 2);
  options.kmeans.seed = derive_seed(config.seed(), 3);

  int n_c = 0;
  if (config.n_concepts) {
    n_c = *config.n_concepts;
  } else {
    const EigengapResult gap = select_cluster_count(affinity, config.k_max, options);
    n_c = gap.n_c;
    result.eigengap_spectrum = gap.eigenvalues;
  }
  const ClusterAssignment inliers = spectral_cluster(affinity, n_c, config.seed(), options);
  result.clusters = expand_to_dictionary(inliers, result.representation);

  const Manifest& manifest = stack.manifest();
  const BasisOptions basis_options{config.alpha_fo, config.centered};
  for (int k = 0; k < result.clusters.n_c; ++k) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < result.clusters.labels.size(); ++i) {
      if (result.clusters.labels[i] == k) members.push_back(i);
    }
    if (members.size() < 2) {
      throw NumericalError("discover: cluster " + std::to_string(k) + " has " + std::to_string(members.size()) +
                           " member(s); lower n_concepts");
    }
    Eigen::MatrixXd vectors(static_cast<Eigen::Index>(stack.features()), static_cast<Eigen::Index>(members.size()));
    for (std::size_t m = 0; m < members.size(); ++m) {
      vectors.col(static_cast<Eigen::Index>(m)) = stack.vector_at(result.dictionary.locations[members[m]]);
    }
    ConceptSubspace concept_subspace = fit_concept_basis(vectors, basis_options);
    concept_subspace.concept_id = config.concept_prefix + "_" + std::to_string(k);
    concept_subspace.source = {manifest.dataset_name, manifest.class_labels, manifest.layer_id, config.seed(), k};
    result.concepts.push_back(std::move(concept_subspace));
  }
  return result;
}

void write_discovery(const DiscoveryResult& result, const RunConfig& config, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  save_concept_bank(result.concepts, out_dir / "concepts");
  save_cluster_assignment(result.clusters, out_dir / "clusters.json");
  save_self_representation(result.representation, config.solver, out_dir / "self_representation.txt");

  nlohmann::json concepts = nlohmann::json::array();
  for (const auto& c : result.concepts) {
    concepts.push_back({{"concept_id", c.concept_id},
                        {"intrinsic_dim", c.intrinsic_dim()},
                        {"member_count", c.member_count},
                        {"threshold_angle", c.threshold_angle}});
  }
  nlohmann::json log = {{"dictionary_columns", result.dictionary.atoms.cols()},
                        {"feature_coords", result.dictionary.feature_coords.size()},
                        {"inliers", result.representation.inlier_count()},
                        {"n_c", result.clusters.n_c},
                        {"cluster_count_rule", config.n_concepts ? "fixed" : "eigengap"},
                        {"eigengap_spectrum", result.eigengap_spectrum},
                        {"concepts", concepts}};
  if (result.representation.outlier_threshold) log["outlier_threshold"] = *result.representation.outlier_threshold;
  write_json(out_dir / "run_log.json", log);
}

}  // namespace ssccd
