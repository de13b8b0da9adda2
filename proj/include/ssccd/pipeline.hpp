#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ssccd/clustering.hpp"
#include "ssccd/ssc_solver.hpp"
#include "ssccd/subspace.hpp"
#include "ssccd/tensor_io.hpp"

namespace ssccd {

/// Everything a command needs, as one JSON document. Solver fields sit at the
/// top level; `n_concepts` is an integer or the string "eigengap".
struct RunConfig {
  SolverConfig solver;
  std::optional<int> n_concepts;  // nullopt selects the eigengap rule
  int k_max = 10;
  double alpha_fo = 0.05;
  bool centered = false;
  std::string layer_id;
  std::string concept_prefix = "concept";

  std::string features;                   // feature stack (.npy) for discover and map
  std::vector<std::string> attributions;  // attribution stacks for relevance
  std::string relevance;                  // relevance table (.json) driving sdc ordering
  std::vector<std::string> results;       // accuracy results (.json) for sdc ingestion
  std::string output = "ssccd_out";
  bool upsample = true;
  std::size_t anchor = 0;  // similarity anchor index

  std::uint64_t seed() const { return solver.seed; }
  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys take the defaults above; unknown keys are rejected.
  static RunConfig from_json(const nlohmann::json& j);
};

struct DiscoveryResult {
  Dictionary dictionary;
  SelfRepresentation representation;
  ClusterAssignment clusters;  // one label per dictionary column
  std::vector<double> eigengap_spectrum;  // empty when n_concepts was fixed
  std::vector<ConceptSubspace> concepts;
};

/// subsample -> drop dead columns -> solve -> outlier refit -> affinity ->
/// cluster count -> spectral clustering -> one basis per cluster fitted on
/// the members' full feature vectors.
DiscoveryResult discover(const FeatureStack& stack, const RunConfig& config);

/// Writes concepts/ (bank), clusters.json, self_representation.txt (+ .json)
/// and run_log.json under `out_dir`.
void write_discovery(const DiscoveryResult& result, const RunConfig& config, const std::filesystem::path& out_dir);

}  // namespace ssccd
