#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ssccd/concept_maps.hpp"
#include "ssccd/tensor_io.hpp"

namespace ssccd {

/// Sum of attributions over the mask; nullopt when the mask is empty
/// (concept not activated on this sample).
std::optional<double> concept_relevance(const ConceptMask& mask, const AttributionStack& attribution,
                                        std::size_t sample);

/// Per-sample scores before aggregation. NaN marks non-activated entries.
struct SampleScores {
  std::vector<std::string> concept_ids;
  std::vector<std::string> sample_ids;
  Eigen::MatrixXd scores;  // samples x concepts
  std::string attribution_method;
  Space space = Space::kInput;
};

struct RelevanceTable {
  std::vector<std::string> concept_ids;  // canonical order: descending per_class
  std::vector<std::string> sample_ids;
  Eigen::MatrixXd per_sample;  // samples x concepts (canonical order), NaN = not activated
  std::vector<double> per_class;  // mean over activated samples; NaN if none
  std::vector<std::size_t> activated_samples;
  /// Means with non-activated samples counted as 0, kept for auditing.
  std::vector<double> per_class_zero_filled;
  std::string attribution_method;
  Space space = Space::kInput;

  bool activated(std::size_t k) const { return activated_samples[k] > 0; }
  std::optional<std::size_t> index_of(const std::string& concept_id) const;

  nlohmann::json to_json() const;
  static RelevanceTable from_json(const nlohmann::json& j);
};

/// Class means over activated samples, concepts ordered by descending mean
/// (ties by concept_id); non-activated concepts go last, by concept_id.
RelevanceTable aggregate_class_relevance(const SampleScores& scores);

/// Scores every (sample, concept) pair of `masks` ([concept][sample]) against
/// the attribution stack, matching samples by id.
SampleScores score_samples(const std::vector<std::vector<ConceptMask>>& masks,
                           const AttributionStack& attribution);

/// Average ranks (1-based), ties share the mean of their positions.
std::vector<double> average_ranks(const std::vector<double>& values);

/// Spearman correlation of the class-level relevances over the concepts
/// activated in both tables.
double spearman_rank_consistency(const RelevanceTable& a, const RelevanceTable& b);

/// "livery (8.0), windows (7.8), ..." in canonical order.
std::string format_bracketed(const RelevanceTable& table);

void write_relevance_csv(const RelevanceTable& table, const std::filesystem::path& path);

struct ProximityReport {
  std::vector<std::string> concept_ids;
  std::vector<double> mean_normalized;  // mean of proximity / threshold
  /// Means above one flag concepts that are, on average, not activated.
  bool activated(std::size_t k) const { return mean_normalized[k] < 1.0; }
};

ProximityReport normalized_proximity_report(const std::vector<ConceptMapSet>& maps,
                                            const std::vector<ConceptSubspace>& concepts);
ProximityReport normalized_proximity_report(const std::vector<StoredMaps>& maps);

/// "(0.95, 0.99, 0.98)"; non-activated entries get a trailing '*'.
std::string format_proximity(const ProximityReport& report);

}  // namespace ssccd
