#include <fstream>
#include <iterator>

#include <gtest/gtest.h>

#include "commands.hpp"
#include "ssccd/error.hpp"
#include "ssccd/pipeline.hpp"
#include "ssccd/sdc.hpp"
#include "ssccd/svg.hpp"
#include "test_support.hpp"

namespace ssccd {
namespace {

namespace fs = std::filesystem;
using testing::matched_error;
using testing::stack_from_points;
using testing::union_of_subspaces;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "ssccd");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return cli::run_cli(static_cast<int>(argv.size()), argv.data());
}

RunConfig small_config() {
  RunConfig c;
  c.solver.n_batches = 1;
  c.solver.batch_size = 90;
  c.solver.feature_subsample_ratio = 1.0;
  c.solver.seed = 4;
  c.n_concepts = 3;
  return c;
}

/// 3 planes in R^16, 30 points each, one point per sample.
FeatureStack three_planes(std::uint64_t seed = 7) {
  return stack_from_points(union_of_subspaces(3, 16, 2, 30, 0.001, seed).points);
}

TEST(RunConfig, JsonRoundTripAndValidation) {
  RunConfig c = small_config();
  c.attributions = {"a.npy", "b.npy"};
  c.results = {"r.json"};
  c.layer_id = "features.29";
  const RunConfig back = RunConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.n_concepts, 3);

  c.n_concepts.reset();
  EXPECT_EQ(c.to_json().at("n_concepts"), "eigengap");
  EXPECT_FALSE(RunConfig::from_json(c.to_json()).n_concepts.has_value());

  nlohmann::json j = c.to_json();
  j["unknown_key"] = 1;
  EXPECT_THROW(RunConfig::from_json(j), ConfigError);
  j = c.to_json();
  j["tau"] = 1.5;
  EXPECT_THROW(RunConfig::from_json(j), ConfigError);
}

TEST(Discover, RecoversPlanesWithFixedCount) {
  const FeatureStack stack = three_planes();
  const DiscoveryResult r = discover(stack, small_config());
  ASSERT_EQ(r.concepts.size(), 3u);
  const auto truth = union_of_subspaces(3, 16, 2, 30, 0.001, 7).labels;
  // Dictionary columns map back to samples through their locations.
  std::vector<int> predicted, expected;
  for (std::size_t j = 0; j < r.dictionary.locations.size(); ++j) {
    predicted.push_back(r.clusters.labels[j]);
    expected.push_back(truth[r.dictionary.locations[j].sample]);
  }
  EXPECT_EQ(matched_error(predicted, expected), 0.0);
  for (const auto& c : r.concepts) {
    EXPECT_EQ(c.intrinsic_dim(), 2);
    EXPECT_EQ(c.source.seed, 4u);
  }
  EXPECT_TRUE(r.eigengap_spectrum.empty());
  EXPECT_EQ(r.concepts[0].concept_id, "concept_0");
}

TEST(Discover, EigengapSelectsThree) {
  // At gamma = 10 the within-plane graphs of this small set are too weakly
  // connected for the largest gap to sit at 3.
  RunConfig c = small_config();
  c.solver.gamma = 50;
  c.n_concepts.reset();
  const DiscoveryResult r = discover(three_planes(), c);
  EXPECT_EQ(r.concepts.size(), 3u);
  EXPECT_FALSE(r.eigengap_spectrum.empty());
}

TEST(Discover, RerunsAreBitwiseIdentical) {
  const FeatureStack stack = three_planes(8);
  const auto a = testing::temp_dir("det_a");
  const auto b = testing::temp_dir("det_b");
  write_discovery(discover(stack, small_config()), small_config(), a);
  write_discovery(discover(stack, small_config()), small_config(), b);
  std::size_t compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), a);
    EXPECT_EQ(slurp(e.path()), slurp(b / rel)) << rel;
    ++compared;
  }
  EXPECT_GT(compared, 3u);
}

TEST(Discover, LayerMismatchIsAnError) {
  RunConfig c = small_config();
  c.layer_id = "other";
  EXPECT_THROW(discover(three_planes(), c), ConfigError);
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = testing::temp_dir(std::string("cli_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    out_ = (dir_ / "out").string();
    features_ = (dir_ / "features.npy").string();
    save_feature_stack(three_planes(), features_);
  }
  int discover_cmd() {
    return run({"--out", out_, "--seed", "4", "discover", "--features", features_, "--n-concepts", "3",
                "--n-batches", "1", "--batch-size", "90", "--feature-subsample-ratio", "1.0"});
  }
  fs::path dir_;
  std::string out_;
  std::string features_;
};

TEST_F(CliTest, EndToEndWithZeroAttributions) {
  ASSERT_EQ(discover_cmd(), 0);
  EXPECT_TRUE(fs::exists(fs::path(out_) / "concepts" / "bank.json"));
  EXPECT_TRUE(fs::exists(fs::path(out_) / "run_log.json"));
  const auto effective = read_json(fs::path(out_) / "discover.config.json");
  EXPECT_EQ(effective.at("batch_size"), 90);
  EXPECT_EQ(effective.at("seed"), 4);

  ASSERT_EQ(run({"--out", out_, "map", "--features", features_}), 0);
  EXPECT_TRUE(fs::exists(fs::path(out_) / "maps" / "normalized_proximity.csv"));
  ASSERT_EQ(run({"--out", out_, "similarity"}), 0);
  EXPECT_TRUE(fs::exists(fs::path(out_) / "similarity.svg"));

  const FeatureStack stack = load_feature_stack(features_);
  const Manifest& m = stack.manifest();
  const std::string attr = (dir_ / "zero_ig.npy").string();
  save_attribution_stack(AttributionStack(m, Space::kInput, "integrated_gradients",
                                          std::vector<float>(m.num_samples() * m.input_height * m.input_width, 0.0f)),
                         attr);
  ASSERT_EQ(run({"--out", out_, "relevance", "--attributions", attr}), 0);
  const RelevanceTable t =
      RelevanceTable::from_json(read_json(fs::path(out_) / "relevance" / "integrated_gradients_input.json"));
  for (std::size_t k = 0; k < t.concept_ids.size(); ++k) {
    if (t.activated(k)) EXPECT_EQ(t.per_class[k], 0.0);
  }

  ASSERT_EQ(run({"--out", out_, "sdc", "--order", "both", "--relevance",
                 (fs::path(out_) / "relevance" / "integrated_gradients_input.json").string()}),
            0);
  for (const char* variant : {"relevance_order", "random_order"}) {
    const JobManifest jobs = JobManifest::from_json(read_json(fs::path(out_) / "sdc" / variant / "jobs.json"));
    EXPECT_EQ(jobs.job_count(), m.num_samples() * 3);
    EXPECT_EQ(jobs.variant_tag, variant);
  }

  AccuracyResults results{"relevance_order", {{1, 0.9, 90}, {2, 0.6, 90}, {3, 0.2, 90}}};
  const std::string results_path = (dir_ / "acc.json").string();
  write_json(results_path, results.to_json());
  ASSERT_EQ(run({"--out", out_, "sdc", "--results", results_path}), 0);
  EXPECT_TRUE(fs::exists(fs::path(out_) / "sdc" / "curves.csv"));

  ASSERT_EQ(run({"--out", out_, "report"}), 0);
  const std::string report = slurp(fs::path(out_) / "report.txt");
  EXPECT_NE(report.find("concepts: 3"), std::string::npos);
}

TEST_F(CliTest, ConfigFileIsOverriddenByFlags) {
  RunConfig c = small_config();
  c.features = features_;
  c.output = out_;
  c.solver.gamma = 50;
  const std::string config = (dir_ / "run.json").string();
  write_json(config, c.to_json());
  ASSERT_EQ(run({"--config", config, "discover", "--gamma", "20"}), 0);
  const auto effective = read_json(fs::path(out_) / "discover.config.json");
  EXPECT_EQ(effective.at("gamma"), 20.0);
  EXPECT_EQ(effective.at("batch_size"), 90);
  // The persisted config re-runs to the same bank.
  const std::string first = slurp(fs::path(out_) / "concepts" / "concept_0.npy");
  ASSERT_EQ(run({"--config", (fs::path(out_) / "discover.config.json").string(), "discover"}), 0);
  EXPECT_EQ(slurp(fs::path(out_) / "concepts" / "concept_0.npy"), first);
}

TEST_F(CliTest, DuplicateBankGivesZeroDistance) {
  ConceptSubspace a;
  a.basis = Eigen::MatrixXd::Identity(16, 2);
  a.concept_id = "a";
  ConceptSubspace b = a;
  b.concept_id = "b";
  ConceptSubspace c = a;
  c.basis = Eigen::MatrixXd::Identity(16, 4).rightCols(2);
  c.concept_id = "c";
  save_concept_bank({a, b, c}, fs::path(out_) / "concepts");
  ASSERT_EQ(run({"--out", out_, "similarity"}), 0);
  std::ifstream in(fs::path(out_) / "similarity.csv");
  std::string header, row_a;
  std::getline(in, header);
  std::getline(in, row_a);
  EXPECT_EQ(header, "concept_id,a,b,c");
  EXPECT_EQ(row_a.substr(0, 6), "a,0,0,");
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(run({"--out", out_, "map", "--features", features_}), 7);
  EXPECT_EQ(run({"--out", out_, "report"}), 7);
  EXPECT_EQ(run({"discover", "--no-such-flag"}), 2);
  EXPECT_EQ(run({}), 2);
  EXPECT_EQ(run({"--out", out_, "discover", "--features", (dir_ / "missing.npy").string()}), 7);
  EXPECT_EQ(run({"--out", "/proc/ssccd_no/out", "discover", "--features", features_, "--n-concepts", "3", "--n-batches",
                 "1", "--batch-size", "90", "--feature-subsample-ratio", "1.0"}),
            4);
  EXPECT_EQ(run({"--out", out_, "discover", "--features", features_, "--tau", "2"}), 3);
  EXPECT_EQ(run({"--out", out_, "discover", "--features", features_, "--n-concepts", "three"}), 3);
}

TEST(Svg, ChartsAreWellFormed) {
  const std::string h = svg::heatmap(Eigen::MatrixXd::Identity(2, 2), {"a", "b"}, {"a", "b"}, "t");
  EXPECT_EQ(h.rfind("<svg", 0), 0u);
  EXPECT_NE(h.find("</svg>"), std::string::npos);
  const std::string l = svg::line_chart({{"relevance_order", {0.1, 0.5}, {0.9, 0.4}}}, "x", "y", "SDC");
  EXPECT_NE(l.find("relevance_order"), std::string::npos);
  EXPECT_EQ(svg::line_chart({{"s", {0.1, 0.5}, {0.9, 0.4}}}, "x", "y", "t"),
            svg::line_chart({{"s", {0.1, 0.5}, {0.9, 0.4}}}, "x", "y", "t"));
  EXPECT_THROW(svg::write_file("/proc/ssccd_no/x.svg", h), IoError);
}

}  // namespace
}  // namespace ssccd
