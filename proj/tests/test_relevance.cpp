#include <cmath>
#include <fstream>
#include <limits>

#include <gtest/gtest.h>

#include "ssccd/error.hpp"
#include "ssccd/relevance.hpp"
#include "test_support.hpp"

namespace ssccd {
namespace {

using testing::make_manifest;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

ConceptMask mask_of(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> bits, const std::string& id = "c",
                    const std::string& sample = "s0", Space space = Space::kFeature) {
  ConceptMask m;
  m.concept_id = id;
  m.sample_id = sample;
  m.space = space;
  m.rows = rows;
  m.cols = cols;
  m.mask = std::move(bits);
  return m;
}

/// Feature-space attributions on an n x h x w grid (manifest feature size h x w).
AttributionStack feature_attr(std::size_t n, std::size_t h, std::size_t w, std::vector<float> data,
                              const std::string& method = "ig") {
  return AttributionStack(make_manifest(n, h, w, 1), Space::kFeature, method, std::move(data));
}

/// Gaussian values rounded onto a 2^-16 grid so double sums are exact in any order.
std::vector<float> dyadic_values(std::size_t count, Rng& rng) {
  std::vector<float> v(count);
  for (auto& x : v) x = static_cast<float>(std::round(standard_normal(rng) * 65536.0) / 65536.0);
  return v;
}

SampleScores fixture_scores(const std::vector<std::pair<std::string, double>>& entries) {
  SampleScores s;
  s.sample_ids = {"s0", "s1"};
  s.scores.resize(2, static_cast<Eigen::Index>(entries.size()));
  for (std::size_t k = 0; k < entries.size(); ++k) {
    s.concept_ids.push_back(entries[k].first);
    // Two samples whose mean is the fixture value.
    s.scores(0, static_cast<Eigen::Index>(k)) = entries[k].second - 0.25;
    s.scores(1, static_cast<Eigen::Index>(k)) = entries[k].second + 0.25;
  }
  s.attribution_method = "fixture";
  return s;
}

TEST(ConceptRelevance, ZeroAttributionGivesZero) {
  const AttributionStack a = feature_attr(1, 2, 2, std::vector<float>(4, 0.0f));
  EXPECT_EQ(concept_relevance(mask_of(2, 2, {1, 0, 1, 1}), a, 0), 0.0);
}

TEST(ConceptRelevance, FullMaskGivesTotalAndEmptyMaskIsUndefined) {
  const AttributionStack a = feature_attr(1, 2, 3, {1, -2, 3.5, 0.25, 4, -1});
  EXPECT_EQ(concept_relevance(mask_of(2, 3, std::vector<std::uint8_t>(6, 1)), a, 0), 5.75);
  EXPECT_FALSE(concept_relevance(mask_of(2, 3, std::vector<std::uint8_t>(6, 0)), a, 0).has_value());
}

TEST(ConceptRelevance, PartitionMasksAreAdditive) {
  Rng rng(101);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t h = 5 + uniform_index(rng, 6);
    const std::size_t w = 5 + uniform_index(rng, 6);
    const std::vector<float> data = dyadic_values(h * w, rng);
    const AttributionStack a = feature_attr(1, h, w, data);
    const std::size_t parts = 2 + uniform_index(rng, 4);
    std::vector<std::vector<std::uint8_t>> masks(parts, std::vector<std::uint8_t>(h * w, 0));
    for (std::size_t i = 0; i < h * w; ++i) masks[uniform_index(rng, parts)][i] = 1;
    double total = 0.0;
    for (float v : data) total += v;
    double sum = 0.0;
    for (const auto& m : masks) sum += concept_relevance(mask_of(h, w, m), a, 0).value_or(0.0);
    EXPECT_EQ(sum, total);
  }
}

TEST(ConceptRelevance, RejectsSpaceAndResolutionMismatch) {
  const AttributionStack a = feature_attr(1, 2, 2, std::vector<float>(4, 1.0f));
  EXPECT_THROW(concept_relevance(mask_of(2, 3, std::vector<std::uint8_t>(6, 1)), a, 0), ValidationError);
  EXPECT_THROW(concept_relevance(mask_of(2, 2, {1, 1, 1, 1}, "c", "s0", Space::kInput), a, 0), ValidationError);
  EXPECT_THROW(concept_relevance(mask_of(2, 2, {1, 1, 1, 1}), a, 4), ValidationError);
}

TEST(Aggregate, PoliceVanOrderingFixture) {
  const RelevanceTable t = aggregate_class_relevance(fixture_scores(
      {{"street", 0.5}, {"livery", 8.0}, {"buildings", 0.3}, {"tires_underbody", 3.7}, {"windows", 7.8}}));
  EXPECT_EQ(t.concept_ids,
            (std::vector<std::string>{"livery", "windows", "tires_underbody", "street", "buildings"}));
  EXPECT_NEAR(t.per_class[0], 8.0, 1e-12);
  EXPECT_EQ(format_bracketed(t), "livery (8.0), windows (7.8), tires_underbody (3.7), street (0.5), buildings (0.3)");
}

TEST(Aggregate, CelebaMaleOrderingFixture) {
  const RelevanceTable t = aggregate_class_relevance(fixture_scores(
      {{"background_b", -0.8}, {"hair", 0.5}, {"chin", 1.1}, {"background_a", -0.3}, {"nose", 1.0}}));
  EXPECT_EQ(t.concept_ids, (std::vector<std::string>{"chin", "nose", "hair", "background_a", "background_b"}));
  EXPECT_EQ(format_bracketed(t), "chin (1.1), nose (1.0), hair (0.5), background_a (-0.3), background_b (-0.8)");
}

TEST(Aggregate, EqualScoresSortById) {
  const RelevanceTable t = aggregate_class_relevance(fixture_scores({{"delta", 1}, {"alpha", 1}, {"charlie", 1}}));
  EXPECT_EQ(t.concept_ids, (std::vector<std::string>{"alpha", "charlie", "delta"}));
}

TEST(Aggregate, NonActivatedSamplesExcludedAndConceptsLast) {
  SampleScores s;
  s.concept_ids = {"a", "b", "c"};
  s.sample_ids = {"s0", "s1", "s2"};
  s.scores.resize(3, 3);
  s.scores << 1.0, kNaN, kNaN,  //
      kNaN, 0.5, kNaN,          //
      3.0, kNaN, kNaN;
  const RelevanceTable t = aggregate_class_relevance(s);
  EXPECT_EQ(t.concept_ids, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_DOUBLE_EQ(t.per_class[0], 2.0);
  EXPECT_DOUBLE_EQ(t.per_class_zero_filled[0], 4.0 / 3.0);
  EXPECT_EQ(t.activated_samples, (std::vector<std::size_t>{2, 1, 0}));
  EXPECT_TRUE(std::isnan(t.per_class[2]));
  EXPECT_FALSE(t.activated(2));
  // Sign guard: excluding non-activated samples keeps the sign of the mean.
  for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(std::signbit(t.per_class[k]), std::signbit(t.per_class_zero_filled[k]));
}

TEST(Aggregate, ScoreSamplesMatchesDirectSums) {
  Rng rng(102);
  const std::size_t n = 4, h = 3, w = 3;
  const std::vector<float> data = dyadic_values(n * h * w, rng);
  const AttributionStack a = feature_attr(n, h, w, data);
  std::vector<std::vector<ConceptMask>> masks(2);
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t s = 0; s < n; ++s) {
      std::vector<std::uint8_t> bits(h * w);
      for (auto& b : bits) b = uniform_unit(rng) < 0.4 ? 1 : 0;
      if (k == 1 && s == 2) std::fill(bits.begin(), bits.end(), 0);
      masks[k].push_back(mask_of(h, w, bits, "k" + std::to_string(k), "s" + std::to_string(s)));
    }
  const SampleScores scores = score_samples(masks, a);
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t s = 0; s < n; ++s) {
      double expected = 0.0;
      bool any = false;
      for (std::size_t i = 0; i < h * w; ++i)
        if (masks[k][s].mask[i]) {
          expected += data[s * h * w + i];
          any = true;
        }
      const double got = scores.scores(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(k));
      if (any) {
        EXPECT_EQ(got, expected);
      } else {
        EXPECT_TRUE(std::isnan(got));
      }
    }
}

TEST(Ranking, InvariantUnderPositiveRescaling) {
  Rng rng(103);
  const std::size_t n = 5, h = 4, w = 4;
  std::vector<std::vector<ConceptMask>> masks(4);
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t s = 0; s < n; ++s) {
      std::vector<std::uint8_t> bits(h * w);
      for (auto& b : bits) b = uniform_unit(rng) < 0.3 ? 1 : 0;
      bits[k] = 1;
      masks[k].push_back(mask_of(h, w, bits, "k" + std::to_string(k), "s" + std::to_string(s)));
    }
  const std::vector<float> base = dyadic_values(n * h * w, rng);
  const RelevanceTable ref = aggregate_class_relevance(score_samples(masks, feature_attr(n, h, w, base)));
  for (float c : {0.001f, 0.5f, 3.0f, 1000.0f}) {
    std::vector<float> scaled = base;
    for (auto& v : scaled) v *= c;
    const RelevanceTable t = aggregate_class_relevance(score_samples(masks, feature_attr(n, h, w, scaled)));
    EXPECT_EQ(t.concept_ids, ref.concept_ids) << c;
  }
}

RelevanceTable table_with(const std::vector<double>& per_class) {
  SampleScores s;
  s.sample_ids = {"s0"};
  s.scores.resize(1, static_cast<Eigen::Index>(per_class.size()));
  for (std::size_t k = 0; k < per_class.size(); ++k) {
    s.concept_ids.push_back("k" + std::to_string(k));
    s.scores(0, static_cast<Eigen::Index>(k)) = per_class[k];
  }
  return aggregate_class_relevance(s);
}

TEST(Spearman, IdenticalAndReversed) {
  const RelevanceTable a = table_with({5, 4, 3, 2, 1});
  EXPECT_DOUBLE_EQ(spearman_rank_consistency(a, a), 1.0);
  EXPECT_DOUBLE_EQ(spearman_rank_consistency(a, table_with({1, 2, 3, 4, 5})), -1.0);
}

TEST(Spearman, InvariantUnderMonotoneTransforms) {
  Rng rng(104);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> x(8), y(8), ty(8);
    for (std::size_t i = 0; i < 8; ++i) {
      x[i] = standard_normal(rng);
      y[i] = standard_normal(rng);
      ty[i] = std::exp(3.0 * y[i]) - 7.0;
    }
    EXPECT_NEAR(spearman_rank_consistency(table_with(x), table_with(y)),
                spearman_rank_consistency(table_with(x), table_with(ty)), 1e-12);
  }
}

TEST(Spearman, AverageRanksAndErrors) {
  EXPECT_EQ(average_ranks({10, 20, 20, 5}), (std::vector<double>{2, 3.5, 3.5, 1}));
  EXPECT_THROW(spearman_rank_consistency(table_with({1}), table_with({1})), ValidationError);
  EXPECT_THROW(spearman_rank_consistency(table_with({1, 2}), table_with({1, 2, 3})), ValidationError);
}

TEST(ProximityReport, CelebaFixtureFormatting) {
  ProximityReport male{{"chin", "nose", "hair"}, {0.95, 0.99, 0.98}};
  ProximityReport female{{"chin", "nose", "hair"}, {0.99, 1.05, 1.01}};
  EXPECT_EQ(format_proximity(male), "(0.95, 0.99, 0.98)");
  EXPECT_EQ(format_proximity(female), "(0.99, 1.05*, 1.01*)");
  EXPECT_TRUE(female.activated(0));
  EXPECT_FALSE(female.activated(1));
}

TEST(ProximityReport, AllAtThresholdGivesExactlyOne) {
  StoredMaps m;
  m.concept_id = "c";
  m.threshold_angle = 0.37;
  m.proximity = std::vector<double>(9, 0.37);
  const ProximityReport r = normalized_proximity_report(std::vector<StoredMaps>{m});
  EXPECT_EQ(r.mean_normalized[0], 1.0);
  EXPECT_FALSE(r.activated(0));
}

TEST(ProximityReport, MatchesDirectMean) {
  Rng rng(105);
  StoredMaps m;
  m.concept_id = "c";
  m.threshold_angle = 0.6;
  double expected = 0.0;
  for (int i = 0; i < 50; ++i) {
    m.proximity.push_back(uniform_unit(rng));
    expected += m.proximity.back() / 0.6;
  }
  EXPECT_NEAR(normalized_proximity_report(std::vector<StoredMaps>{m}).mean_normalized[0], expected / 50, 1e-12);
}

TEST(RelevanceTable, JsonRoundTripKeepsNaN) {
  SampleScores s;
  s.concept_ids = {"a", "b"};
  s.sample_ids = {"s0", "s1"};
  s.scores.resize(2, 2);
  s.scores << 1.5, kNaN, -0.5, kNaN;
  s.attribution_method = "occlusion";
  s.space = Space::kFeature;
  const RelevanceTable t = aggregate_class_relevance(s);
  const RelevanceTable back = RelevanceTable::from_json(t.to_json());
  EXPECT_EQ(back.concept_ids, t.concept_ids);
  EXPECT_EQ(back.attribution_method, "occlusion");
  EXPECT_EQ(back.space, Space::kFeature);
  EXPECT_EQ(back.activated_samples, t.activated_samples);
  EXPECT_TRUE(std::isnan(back.per_class[1]));
  EXPECT_EQ(back.per_sample(1, 0), -0.5);

  const auto dir = testing::temp_dir("relevance_csv");
  write_relevance_csv(t, dir / "t.csv");
  std::ifstream in(dir / "t.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_FALSE(header.empty());
  EXPECT_THROW(RelevanceTable::from_json(nlohmann::json::object()), ValidationError);
}

}  // namespace
}  // namespace ssccd
