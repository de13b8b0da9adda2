#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <gtest/gtest.h>

#include "ssccd/error.hpp"
#include "ssccd/npy.hpp"
#include "ssccd/sdc.hpp"
#include "test_support.hpp"

namespace ssccd {
namespace {

ConceptMask input_mask(const std::string& concept_id, const std::string& sample, std::size_t rows, std::size_t cols,
                       std::vector<std::uint8_t> bits) {
  ConceptMask m;
  m.concept_id = concept_id;
  m.sample_id = sample;
  m.space = Space::kInput;
  m.rows = rows;
  m.cols = cols;
  m.mask = std::move(bits);
  return m;
}

std::vector<std::uint8_t> random_bits(std::size_t n, double p, Rng& rng) {
  std::vector<std::uint8_t> bits(n);
  for (auto& b : bits) b = uniform_unit(rng) < p ? 1 : 0;
  return bits;
}

/// Relevance table with the given per-sample scores ([sample][concept]).
RelevanceTable relevances(const std::vector<std::string>& concepts, const std::vector<std::string>& samples,
                          const std::vector<std::vector<double>>& scores) {
  SampleScores s;
  s.concept_ids = concepts;
  s.sample_ids = samples;
  s.scores.resize(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(concepts.size()));
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t k = 0; k < concepts.size(); ++k)
      s.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = scores[i][k];
  return aggregate_class_relevance(s);
}

std::size_t popcount(const std::vector<std::uint8_t>& bits) {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

/// Random masks for `concepts` x `samples` on an h x w grid, plus matching relevances.
struct RandomSetup {
  std::vector<std::vector<ConceptMask>> masks;
  RelevanceTable table;
};

RandomSetup random_setup(std::size_t concepts, std::size_t samples, std::size_t h, std::size_t w, Rng& rng) {
  RandomSetup r;
  std::vector<std::string> ids, sample_ids;
  for (std::size_t k = 0; k < concepts; ++k) ids.push_back("concept_" + std::to_string(k));
  for (std::size_t s = 0; s < samples; ++s) sample_ids.push_back("s" + std::to_string(s));
  std::vector<std::vector<double>> scores(samples, std::vector<double>(concepts));
  r.masks.resize(concepts);
  for (std::size_t k = 0; k < concepts; ++k)
    for (std::size_t s = 0; s < samples; ++s) {
      r.masks[k].push_back(input_mask(ids[k], sample_ids[s], h, w, random_bits(h * w, 0.2, rng)));
      scores[s][k] = r.masks[k][s].empty() ? std::numeric_limits<double>::quiet_NaN() : standard_normal(rng);
    }
  r.table = relevances(ids, sample_ids, scores);
  return r;
}

TEST(FlipPlan, OneConceptFractionEqualsDensity) {
  const std::vector<std::uint8_t> bits{1, 0, 1, 1, 0, 0, 0, 1};
  const FlipPlan plan = build_flip_plan({{input_mask("a", "s0", 2, 4, bits)}}, relevances({"a"}, {"s0"}, {{2.0}}),
                                        FlipOrder::kRelevance, 0);
  ASSERT_EQ(plan.samples.size(), 1u);
  ASSERT_EQ(plan.samples[0].steps.size(), 1u);
  EXPECT_EQ(plan.samples[0].steps[0].occluded_fraction, 0.5);
  EXPECT_EQ(plan.samples[0].steps[0].cumulative, bits);
}

TEST(FlipPlan, DisjointMasksOrderedByRelevanceWithAdditiveFractions) {
  // Relevance 1 mask comes first in storage; relevance 5 must be flipped first.
  const std::vector<std::uint8_t> low{1, 1, 1, 0, 0, 0, 0, 0, 0, 0};
  const std::vector<std::uint8_t> high{0, 0, 0, 1, 1, 0, 0, 0, 0, 0};
  const FlipPlan plan = build_flip_plan({{input_mask("low", "s0", 2, 5, low)}, {input_mask("high", "s0", 2, 5, high)}},
                                        relevances({"low", "high"}, {"s0"}, {{1.0, 5.0}}), FlipOrder::kRelevance, 0);
  const auto& steps = plan.samples[0].steps;
  ASSERT_EQ(steps.size(), 2u);
  EXPECT_EQ(steps[0].concept_id, "high");
  EXPECT_EQ(steps[1].concept_id, "low");
  EXPECT_EQ(steps[0].occluded_fraction, 2.0 / 10.0);
  EXPECT_EQ(steps[1].occluded_fraction, (2.0 + 3.0) / 10.0);
  EXPECT_EQ(popcount(steps[1].cumulative), popcount(low) + popcount(high));
}

TEST(FlipPlan, OverlappingMasksUseTheUnion) {
  Rng rng(111);
  for (int trial = 0; trial < 10; ++trial) {
    const auto a = random_bits(36, 0.5, rng);
    const auto b = random_bits(36, 0.5, rng);
    const FlipPlan plan = build_flip_plan({{input_mask("a", "s0", 6, 6, a)}, {input_mask("b", "s0", 6, 6, b)}},
                                          relevances({"a", "b"}, {"s0"}, {{2.0, 1.0}}), FlipOrder::kRelevance, 0);
    std::size_t union_count = 0;
    for (std::size_t p = 0; p < 36; ++p) union_count += (a[p] || b[p]) ? 1 : 0;
    EXPECT_EQ(plan.samples[0].steps[1].occluded_fraction, static_cast<double>(union_count) / 36.0);
    if (union_count < popcount(a) + popcount(b))
      EXPECT_LT(plan.samples[0].steps[1].occluded_fraction, static_cast<double>(popcount(a) + popcount(b)) / 36.0);
  }
}

TEST(FlipPlan, CumulativeMasksAreMonotone) {
  Rng rng(112);
  const RandomSetup setup = random_setup(6, 8, 5, 7, rng);
  for (FlipOrder order : {FlipOrder::kRelevance, FlipOrder::kRandom}) {
    const FlipPlan plan = build_flip_plan(setup.masks, setup.table, order, 5);
    for (const auto& sp : plan.samples) {
      ASSERT_EQ(sp.steps.size(), 6u);
      for (std::size_t k = 1; k < sp.steps.size(); ++k) {
        for (std::size_t p = 0; p < sp.steps[k].cumulative.size(); ++p)
          EXPECT_GE(sp.steps[k].cumulative[p], sp.steps[k - 1].cumulative[p]);
        EXPECT_GE(sp.steps[k].occluded_fraction, sp.steps[k - 1].occluded_fraction);
      }
    }
  }
}

TEST(FlipPlan, NonActivatedConceptsComeLastInRelevanceOrder) {
  const FlipPlan plan = build_flip_plan(
      {{input_mask("empty", "s0", 1, 4, {0, 0, 0, 0})}, {input_mask("neg", "s0", 1, 4, {1, 0, 0, 0})}},
      relevances({"empty", "neg"}, {"s0"}, {{std::numeric_limits<double>::quiet_NaN(), -3.0}}), FlipOrder::kRelevance,
      0);
  EXPECT_EQ(plan.samples[0].steps[0].concept_id, "neg");
  EXPECT_EQ(plan.samples[0].steps[1].concept_id, "empty");
}

TEST(FlipPlan, RandomOrderIsSeeded) {
  Rng rng(113);
  const RandomSetup setup = random_setup(7, 6, 4, 4, rng);
  auto orders = [&](std::uint64_t seed) {
    std::vector<std::vector<std::string>> out;
    for (const auto& sp : build_flip_plan(setup.masks, setup.table, FlipOrder::kRandom, seed).samples) {
      out.emplace_back();
      for (const auto& st : sp.steps) out.back().push_back(st.concept_id);
    }
    return out;
  };
  EXPECT_EQ(orders(17), orders(17));
  EXPECT_NE(orders(17), orders(18));
}

TEST(FlipPlan, MissingRelevanceIsAnError) {
  const std::vector<std::vector<ConceptMask>> masks{{input_mask("a", "s0", 1, 2, {1, 0})},
                                                    {input_mask("b", "s0", 1, 2, {0, 1})}};
  EXPECT_THROW(build_flip_plan(masks, relevances({"a"}, {"s0"}, {{1.0}}), FlipOrder::kRelevance, 0), ValidationError);
  EXPECT_THROW(build_flip_plan(masks,
                               relevances({"a", "b"}, {"s0"}, {{1.0, std::numeric_limits<double>::quiet_NaN()}}),
                               FlipOrder::kRelevance, 0),
               ValidationError);
  // The random control does not need relevances.
  EXPECT_NO_THROW(build_flip_plan(masks, relevances({"a"}, {"s0"}, {{1.0}}), FlipOrder::kRandom, 0));
  std::vector<std::vector<ConceptMask>> feature = masks;
  feature[0][0].space = Space::kFeature;
  EXPECT_THROW(build_flip_plan(feature, relevances({"a", "b"}, {"s0"}, {{1.0, 2.0}}), FlipOrder::kRelevance, 0),
               ValidationError);
}

TEST(Jobs, EmptyPlanHasZeroJobs) {
  const auto dir = testing::temp_dir("jobs_empty");
  const JobManifest m = emit_occlusion_jobs(FlipPlan{}, dir);
  EXPECT_EQ(m.job_count(), 0u);
  EXPECT_TRUE(std::filesystem::exists(dir / "jobs.json"));
  EXPECT_EQ(JobManifest::from_json(read_json(dir / "jobs.json")), m);
}

TEST(Jobs, ThreeSamplesFiveStepsGiveFifteenMaskFiles) {
  Rng rng(114);
  const RandomSetup setup = random_setup(5, 3, 4, 6, rng);
  const FlipPlan plan = build_flip_plan(setup.masks, setup.table, FlipOrder::kRelevance, 0);
  const auto dir = testing::temp_dir("jobs_15");
  const JobManifest m = emit_occlusion_jobs(plan, dir);
  EXPECT_EQ(m.job_count(), 15u);
  EXPECT_EQ(m.variant_tag, "relevance_order");
  std::size_t files = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir / "masks")) files += entry.is_regular_file();
  EXPECT_EQ(files, 15u);
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t k = 0; k < 5; ++k) {
      const JobStep& js = m.samples[s].steps[k];
      EXPECT_EQ(js.step, k + 1);
      const npy::Array arr = npy::read(dir / js.mask_path);
      EXPECT_EQ(arr.shape, (std::vector<std::size_t>{4, 6}));
      EXPECT_EQ(npy::as_u8(arr), plan.samples[s].steps[k].cumulative);
      EXPECT_EQ(js.occluded_fraction, plan.samples[s].steps[k].occluded_fraction);
    }
  EXPECT_EQ(JobManifest::from_json(read_json(dir / "jobs.json")), m);
}

TEST(Jobs, ManifestSchemaValidation) {
  JobManifest m;
  m.variant_tag = "random_order";
  m.seed = 9;
  m.samples.push_back({"s0", {{1, "masks/s0_step1.npy", 0.1}, {2, "masks/s0_step2.npy", 0.3}}});
  const nlohmann::json j = m.to_json();
  EXPECT_EQ(JobManifest::from_json(j), m);
  nlohmann::json bad = j;
  bad["samples"][0]["steps"][1]["step"] = 3;
  EXPECT_THROW(JobManifest::from_json(bad), ValidationError);
  bad = j;
  bad["samples"][0]["steps"][1]["occluded_fraction"] = 0.05;
  EXPECT_THROW(JobManifest::from_json(bad), ValidationError);
  bad = j;
  bad["variant_tag"] = "gray_patch";
  EXPECT_THROW(JobManifest::from_json(bad), ValidationError);
  EXPECT_THROW(JobManifest::from_json(nlohmann::json::object()), ValidationError);
}

JobManifest two_step_manifest() {
  JobManifest m;
  m.variant_tag = "relevance_order";
  m.samples.push_back({"s0", {{1, "a", 0.2}, {2, "b", 0.6}}});
  m.samples.push_back({"s1", {{1, "c", 0.4}, {2, "d", 0.4}}});
  return m;
}

TEST(Ingest, ConstantAccuracyGivesFlatCurve) {
  AccuracyResults r{"relevance_order", {{1, 0.8, 100}, {2, 0.8, 100}}};
  const SdcCurve c = ingest_accuracy(r, two_step_manifest());
  ASSERT_EQ(c.points.size(), 2u);
  EXPECT_EQ(c.points[0].accuracy, c.points[1].accuracy);
  EXPECT_NEAR(c.points[0].occluded_fraction, 0.3, 1e-15);
  EXPECT_NEAR(c.points[1].occluded_fraction, 0.5, 1e-15);
}

TEST(Ingest, OutOfOrderStepsAreSortedAndDeclineKept) {
  AccuracyResults r{"relevance_order", {{2, 0.4, 10}, {1, 0.9, 10}}};
  const SdcCurve c = ingest_accuracy(r, two_step_manifest());
  EXPECT_EQ(c.points[0].step, 1u);
  EXPECT_EQ(c.points[0].accuracy, 0.9);
  EXPECT_EQ(c.points[1].accuracy, 0.4);
}

TEST(Ingest, MissingDuplicateUnknownStepsAndVariantMismatch) {
  EXPECT_THROW(ingest_accuracy({"relevance_order", {{1, 0.9, 10}}}, two_step_manifest()), ValidationError);
  EXPECT_THROW(ingest_accuracy({"relevance_order", {{1, 0.9, 10}, {1, 0.8, 10}, {2, 0.1, 1}}}, two_step_manifest()),
               ValidationError);
  EXPECT_THROW(ingest_accuracy({"relevance_order", {{1, 0.9, 10}, {2, 0.8, 10}, {3, 0.1, 1}}}, two_step_manifest()),
               ValidationError);
  EXPECT_THROW(ingest_accuracy({"random_order", {{1, 0.9, 10}, {2, 0.8, 10}}}, two_step_manifest()), ValidationError);
}

TEST(Ingest, ResultsRoundTripAndCsv) {
  const AccuracyResults r{"random_order", {{1, 0.75, 40}, {2, 0.5, 40}}};
  EXPECT_EQ(AccuracyResults::from_json(r.to_json()), r);
  nlohmann::json bad = r.to_json();
  bad["steps"][0]["accuracy"] = 1.5;
  EXPECT_THROW(AccuracyResults::from_json(bad), ValidationError);

  const auto dir = testing::temp_dir("curves");
  JobManifest m = two_step_manifest();
  m.variant_tag = "random_order";
  write_curves_csv({ingest_accuracy(r, m)}, dir / "curves.csv");
  std::ifstream in(dir / "curves.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "variant_tag,step,occluded_fraction,accuracy");
  int rows = 0;
  while (std::getline(in, line)) rows += line.empty() ? 0 : 1;
  EXPECT_EQ(rows, 2);
}

TEST(VariantTag, ParseAndPrint) {
  EXPECT_EQ(variant_tag(FlipOrder::kRandom), "random_order");
  EXPECT_EQ(parse_variant_tag("relevance_order"), FlipOrder::kRelevance);
  EXPECT_THROW(parse_variant_tag("x"), ValidationError);
}

}  // namespace
}  // namespace ssccd
