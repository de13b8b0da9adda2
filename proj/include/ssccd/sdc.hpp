#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ssccd/concept_maps.hpp"
#include "ssccd/relevance.hpp"

namespace ssccd {

// Concept flipping benchmark: occlude concepts sample by sample, highest
// per-sample relevance first (or in a seeded random order as a control), and
// track model accuracy against the fraction of occluded input pixels.
// Inpainting and model re-evaluation happen outside this process; the plan
// is handed over as mask files plus a JSON job manifest.

enum class FlipOrder { kRelevance, kRandom };

std::string variant_tag(FlipOrder order);
FlipOrder parse_variant_tag(const std::string& tag);

struct FlipStep {
  std::string concept_id;
  std::vector<std::uint8_t> cumulative;  // union of all masks flipped so far
  double occluded_fraction = 0.0;
};

struct SampleFlipPlan {
  std::string sample_id;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<FlipStep> steps;
};

struct FlipPlan {
  FlipOrder order = FlipOrder::kRelevance;
  std::uint64_t seed = 0;
  std::vector<SampleFlipPlan> samples;
};

/// `masks` is indexed [concept][sample] and must hold input-space masks.
/// Every concept becomes one step per sample; non-activated (empty) masks
/// come last in relevance order since they occlude nothing.
FlipPlan build_flip_plan(const std::vector<std::vector<ConceptMask>>& masks,
                         const RelevanceTable& relevances, FlipOrder order, std::uint64_t seed);

struct JobStep {
  std::size_t step = 0;  // 1-based
  std::string mask_path;  // relative to the manifest directory
  double occluded_fraction = 0.0;
  bool operator==(const JobStep&) const = default;
};

struct JobSample {
  std::string sample_id;
  std::vector<JobStep> steps;
  bool operator==(const JobSample&) const = default;
};

struct JobManifest {
  std::vector<JobSample> samples;
  std::string variant_tag;
  std::uint64_t seed = 0;

  std::size_t job_count() const;
  nlohmann::json to_json() const;
  /// Throws ValidationError on any schema violation.
  static JobManifest from_json(const nlohmann::json& j);
  bool operator==(const JobManifest&) const = default;
};

/// Writes `<out_dir>/masks/s<index>_step<k>.npy` (uint8) and `<out_dir>/jobs.json`.
JobManifest emit_occlusion_jobs(const FlipPlan& plan, const std::filesystem::path& out_dir);

struct AccuracyStep {
  std::size_t step = 0;
  double accuracy = 0.0;
  std::size_t n_evaluated = 0;
  bool operator==(const AccuracyStep&) const = default;
};

struct AccuracyResults {
  std::string variant_tag;
  std::vector<AccuracyStep> steps;

  nlohmann::json to_json() const;
  static AccuracyResults from_json(const nlohmann::json& j);
  bool operator==(const AccuracyResults&) const = default;
};

struct CurvePoint {
  std::size_t step = 0;
  double occluded_fraction = 0.0;  // mean over samples
  double accuracy = 0.0;
};

struct SdcCurve {
  std::string variant_tag;
  std::vector<CurvePoint> points;
};

/// Orders results by step and pairs them with the manifest's mean occluded
/// fractions. Every manifest step must be present.
SdcCurve ingest_accuracy(const AccuracyResults& results, const JobManifest& manifest);

void write_curves_csv(const std::vector<SdcCurve>& curves, const std::filesystem::path& path);

}  // namespace ssccd
