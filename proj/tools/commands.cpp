#include "commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ssccd/concept_maps.hpp"
#include "ssccd/error.hpp"
#include "ssccd/pipeline.hpp"
#include "ssccd/relevance.hpp"
#include "ssccd/sdc.hpp"
#include "ssccd/subspace.hpp"
#include "ssccd/svg.hpp"
#include "ssccd/tensor_io.hpp"

namespace ssccd::cli {
namespace fs = std::filesystem;
namespace {

// Raw flag values; only flags that were actually given override the config.
struct Flags {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out;

  std::string features;
  std::string n_concepts;
  std::string layer_id;
  std::string concept_prefix;
  double gamma = 0;
  double tau = 0;
  std::size_t n_batches = 0;
  std::size_t batch_size = 0;
  double ratio = 0;
  double percentile = 0;
  double alpha_fo = 0;
  int k_max = 0;
  bool centered = false;
  bool no_upsample = false;
  std::size_t anchor = 0;
  std::vector<std::string> attributions;
  std::string relevance;
  std::vector<std::string> results;
  std::string order = "both";
};

bool given(const CLI::App& app, const std::string& name) {
  try {
    return app.count(name) > 0;
  } catch (const CLI::OptionNotFound&) {
    return false;
  }
}

RunConfig effective_config(const CLI::App& root, const CLI::App& sub, const Flags& f) {
  nlohmann::json j = nlohmann::json::object();
  if (!f.config_path.empty()) {
    if (!fs::exists(f.config_path)) throw ConfigError("config file not found: " + f.config_path);
    j = read_json(f.config_path);
  }
  RunConfig c = RunConfig::from_json(j);
  if (given(root, "--seed")) c.solver.seed = f.seed;
  if (given(root, "--out")) c.output = f.out;
  if (given(sub, "--features")) c.features = f.features;
  if (given(sub, "--n-concepts")) {
    if (f.n_concepts == "eigengap") {
      c.n_concepts.reset();
    } else {
      try {
        std::size_t used = 0;
        c.n_concepts = std::stoi(f.n_concepts, &used);
        if (used != f.n_concepts.size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw ConfigError("--n-concepts must be an integer or \"eigengap\", got '" + f.n_concepts + "'");
      }
    }
  }
  if (given(sub, "--layer-id")) c.layer_id = f.layer_id;
  if (given(sub, "--concept-prefix")) c.concept_prefix = f.concept_prefix;
  if (given(sub, "--gamma")) c.solver.gamma = f.gamma;
  if (given(sub, "--tau")) c.solver.tau = f.tau;
  if (given(sub, "--n-batches")) c.solver.n_batches = f.n_batches;
  if (given(sub, "--batch-size")) c.solver.batch_size = f.batch_size;
  if (given(sub, "--feature-subsample-ratio")) c.solver.feature_subsample_ratio = f.ratio;
  if (given(sub, "--outlier-percentile")) c.solver.outlier_percentile = f.percentile;
  if (given(sub, "--alpha-fo")) c.alpha_fo = f.alpha_fo;
  if (given(sub, "--k-max")) c.k_max = f.k_max;
  if (given(sub, "--centered")) c.centered = f.centered;
  if (given(sub, "--no-upsample")) c.upsample = !f.no_upsample;
  if (given(sub, "--anchor")) c.anchor = f.anchor;
  if (given(sub, "--attributions")) c.attributions = f.attributions;
  if (given(sub, "--relevance")) c.relevance = f.relevance;
  if (given(sub, "--results")) c.results = f.results;
  c.validate();
  return c;
}

void write_effective_config(const RunConfig& c, const std::string& command) {
  fs::create_directories(c.output);
  write_json(fs::path(c.output) / (command + ".config.json"), c.to_json());
}

const fs::path& require(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw MissingArtifactError(what + " not found: " + p.string());
  return p;
}

std::string need_path(const std::string& value, const std::string& flag) {
  if (value.empty()) throw ConfigError("no " + flag + " given (flag or config file)");
  return value;
}

void write_text(const fs::path& path, const std::string& text) { svg::write_file(path, text); }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int cmd_discover(const RunConfig& c) {
  const FeatureStack stack = load_feature_stack(require(need_path(c.features, "--features"), "feature stack"));
  write_effective_config(c, "discover");
  const DiscoveryResult result = discover(stack, c);
  write_discovery(result, c, c.output);
  std::cout << "discovered " << result.concepts.size() << " concepts from " << result.dictionary.atoms.cols()
            << " locations (" << result.representation.inlier_count() << " inliers)\n";
  for (const auto& k : result.concepts) {
    std::cout << "  " << k.concept_id << ": dim " << k.intrinsic_dim() << ", " << k.member_count
              << " members, threshold " << fmt(k.threshold_angle) << " rad\n";
  }
  return 0;
}

std::vector<ConceptSubspace> bank_of(const RunConfig& c) {
  return load_concept_bank(require(fs::path(c.output) / "concepts", "concept bank (run discover first)"));
}

int cmd_map(const RunConfig& c) {
  const auto bank = bank_of(c);
  const FeatureStack stack = load_feature_stack(require(need_path(c.features, "--features"), "feature stack"));
  write_effective_config(c, "map");
  const fs::path dir = fs::path(c.output) / "maps";
  fs::create_directories(dir);

  std::vector<ConceptMapSet> sets;
  for (const auto& k : bank) {
    sets.push_back(compute_map_set(stack, k, c.upsample));
    save_map_set(sets.back(), dir);
  }

  const auto& ids = stack.manifest().sample_ids;
  Eigen::MatrixXd table(static_cast<Eigen::Index>(bank.size()), static_cast<Eigen::Index>(ids.size()));
  std::ostringstream csv;
  csv << "concept_id";
  for (const auto& s : ids) csv << ',' << s;
  csv << '\n';
  std::vector<std::string> concept_ids;
  for (std::size_t k = 0; k < sets.size(); ++k) {
    concept_ids.push_back(sets[k].concept_id);
    csv << sets[k].concept_id;
    for (std::size_t s = 0; s < sets[k].maps.size(); ++s) {
      const double v = sets[k].maps[s].normalized_proximity;
      table(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(s)) = v;
      csv << ',' << (std::isinf(v) ? std::string("inf") : fmt(v));
    }
    csv << '\n';
  }
  write_text(dir / "normalized_proximity.csv", csv.str());
  svg::write_file(dir / "normalized_proximity.svg",
                  svg::heatmap(table, concept_ids, ids, "normalized sample-concept proximity"));
  std::cout << "normalized proximity " << format_proximity(normalized_proximity_report(sets, bank)) << '\n';
  return 0;
}

int cmd_similarity(const RunConfig& c) {
  const auto bank = bank_of(c);
  if (c.anchor >= bank.size()) throw ConfigError("--anchor out of range for a bank of " + std::to_string(bank.size()));
  write_effective_config(c, "similarity");
  const SimilarityMatrix sim = similarity_matrix(bank, c.anchor).sorted();
  write_similarity_csv(sim, fs::path(c.output) / "similarity.csv");
  svg::write_file(fs::path(c.output) / "similarity.svg",
                  svg::heatmap(sim.distances, sim.concept_ids, sim.concept_ids, "Grassmann distance"));
  std::cout << "similarity over " << bank.size() << " concepts, anchored at " << bank[c.anchor].concept_id << '\n';
  return 0;
}

int cmd_relevance(const RunConfig& c) {
  const auto bank = bank_of(c);
  if (c.attributions.empty()) throw ConfigError("no --attributions given (flag or config file)");
  const fs::path maps = require(fs::path(c.output) / "maps", "concept maps (run map first)");
  write_effective_config(c, "relevance");
  const fs::path dir = fs::path(c.output) / "relevance";
  fs::create_directories(dir);

  std::vector<RelevanceTable> tables;
  for (const auto& path : c.attributions) {
    const AttributionStack attribution = load_attribution_stack(require(path, "attribution stack"));
    std::vector<std::vector<ConceptMask>> masks;
    for (const auto& k : bank) masks.push_back(load_masks(maps, k.concept_id, attribution.space()));
    RelevanceTable table = aggregate_class_relevance(score_samples(masks, attribution));
    const std::string stem = attribution.method_tag() + "_" + to_string(attribution.space());
    write_json(dir / (stem + ".json"), table.to_json());
    write_relevance_csv(table, dir / (stem + ".csv"));
    Eigen::MatrixXd means(1, static_cast<Eigen::Index>(table.concept_ids.size()));
    for (std::size_t k = 0; k < table.concept_ids.size(); ++k) means(0, static_cast<Eigen::Index>(k)) = table.per_class[k];
    svg::write_file(dir / (stem + ".svg"), svg::heatmap(means, {"class mean"}, table.concept_ids, stem));
    std::cout << stem << ": " << format_bracketed(table) << '\n';
    tables.push_back(std::move(table));
  }

  if (tables.size() > 1) {
    nlohmann::json consistency = nlohmann::json::array();
    for (std::size_t i = 1; i < tables.size(); ++i) {
      nlohmann::json entry = {{"a", tables[0].attribution_method}, {"b", tables[i].attribution_method}};
      try {
        entry["spearman"] = spearman_rank_consistency(tables[0], tables[i]);
      } catch (const NumericalError& e) {
        entry["spearman"] = nullptr;
        entry["note"] = e.what();
      }
      consistency.push_back(entry);
    }
    write_json(dir / "rank_consistency.json", consistency);
  }
  return 0;
}

int cmd_sdc(const RunConfig& c, const std::string& order) {
  const fs::path root = fs::path(c.output) / "sdc";
  if (!c.results.empty()) {
    write_effective_config(c, "sdc");
    std::vector<SdcCurve> curves;
    std::vector<svg::Series> series;
    for (const auto& path : c.results) {
      const AccuracyResults results = AccuracyResults::from_json(read_json(require(path, "accuracy results")));
      const fs::path jobs = require(root / results.variant_tag / "jobs.json", "SDC job manifest");
      curves.push_back(ingest_accuracy(results, JobManifest::from_json(read_json(jobs))));
      svg::Series s{curves.back().variant_tag, {}, {}};
      for (const auto& p : curves.back().points) {
        s.x.push_back(p.occluded_fraction);
        s.y.push_back(p.accuracy);
      }
      series.push_back(std::move(s));
    }
    write_curves_csv(curves, root / "curves.csv");
    svg::write_file(root / "curves.svg", svg::line_chart(series, "occluded fraction", "accuracy", "SDC"));
    std::cout << "ingested " << curves.size() << " accuracy file(s) into " << (root / "curves.csv").string() << '\n';
    return 0;
  }

  std::vector<FlipOrder> orders;
  if (order == "relevance" || order == "both") orders.push_back(FlipOrder::kRelevance);
  if (order == "random" || order == "both") orders.push_back(FlipOrder::kRandom);
  if (orders.empty()) throw ConfigError("--order must be relevance, random or both");

  const auto bank = bank_of(c);
  const fs::path maps = require(fs::path(c.output) / "maps", "concept maps (run map first)");
  RelevanceTable table;
  if (orders.front() == FlipOrder::kRelevance) {
    table = RelevanceTable::from_json(read_json(require(need_path(c.relevance, "--relevance"), "relevance table")));
  }
  write_effective_config(c, "sdc");
  std::vector<std::vector<ConceptMask>> masks;
  for (const auto& k : bank) masks.push_back(load_masks(maps, k.concept_id, Space::kInput));
  for (FlipOrder o : orders) {
    const FlipPlan plan = build_flip_plan(masks, table, o, c.seed());
    const JobManifest manifest = emit_occlusion_jobs(plan, root / variant_tag(o));
    std::cout << variant_tag(o) << ": " << manifest.job_count() << " occlusion jobs\n";
  }
  return 0;
}

int cmd_report(const RunConfig& c) {
  const fs::path out(c.output);
  std::ostringstream os;
  bool any = false;
  if (fs::exists(out / "run_log.json")) {
    const auto log = read_json(out / "run_log.json");
    os << "concepts: " << log.at("n_c").get<int>() << " (" << log.at("cluster_count_rule").get<std::string>()
       << "), " << log.at("inliers").get<std::size_t>() << " of " << log.at("dictionary_columns").get<std::size_t>()
       << " locations kept as inliers\n";
    for (const auto& k : log.at("concepts")) {
      os << "  " << k.at("concept_id").get<std::string>() << ": dim " << k.at("intrinsic_dim").get<long>() << ", "
         << k.at("member_count").get<std::size_t>() << " members\n";
    }
    any = true;
  }
  if (fs::exists(out / "relevance")) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(out / "relevance")) {
      if (e.path().extension() == ".json" && e.path().filename() != "rank_consistency.json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const RelevanceTable t = RelevanceTable::from_json(read_json(f));
      os << "relevance " << f.stem().string() << ": " << format_bracketed(t) << '\n';
      any = true;
    }
  }
  if (fs::exists(out / "maps") && fs::exists(out / "concepts" / "bank.json")) {
    std::vector<StoredMaps> stored;
    for (const auto& id : read_json(out / "concepts" / "bank.json").at("concept_ids")) {
      stored.push_back(load_map_summary(out / "maps", id.get<std::string>()));
    }
    const ProximityReport report = normalized_proximity_report(stored);
    os << "normalized proximity (";
    for (std::size_t k = 0; k < report.concept_ids.size(); ++k) os << (k ? ", " : "") << report.concept_ids[k];
    os << "): " << format_proximity(report) << '\n';
    any = true;
  }
  if (fs::exists(out / "sdc" / "curves.csv")) {
    os << "SDC curves: " << (out / "sdc" / "curves.csv").string() << '\n';
    any = true;
  }
  if (!any) throw MissingArtifactError("nothing to report under " + out.string());
  write_text(out / "report.txt", os.str());
  std::cout << os.str();
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Concept discovery with sparse subspace clustering on CNN feature layers", "ssccd"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config_path, "JSON run config; flags override its values");
  app.add_option("--seed", f.seed, "Random seed");
  app.add_option("--out", f.out, "Output directory");

  auto* discover = app.add_subcommand("discover", "Discover concept subspaces from a feature stack");
  discover->add_option("--features", f.features, "Feature stack (.npy with .manifest.json)");
  discover->add_option("--n-concepts", f.n_concepts, "Number of concepts, or \"eigengap\"");
  discover->add_option("--layer-id", f.layer_id, "Expected layer id of the stack");
  discover->add_option("--concept-prefix", f.concept_prefix, "Prefix for concept ids");
  discover->add_option("--gamma", f.gamma, "Residual weight");
  discover->add_option("--tau", f.tau, "l1/l2 mixing weight");
  discover->add_option("--n-batches", f.n_batches, "Number of image batches");
  discover->add_option("--batch-size", f.batch_size, "Images per batch");
  discover->add_option("--feature-subsample-ratio", f.ratio, "Fraction of feature coordinates kept");
  discover->add_option("--outlier-percentile", f.percentile, "Column l1 quantile above which columns are outliers");
  discover->add_option("--alpha-fo", f.alpha_fo, "Eigenvalue ratio for the intrinsic dimension");
  discover->add_option("--k-max", f.k_max, "Largest cluster count considered by the eigengap rule");
  discover->add_flag("--centered", f.centered, "Mean-center members before PCA");

  auto* map = app.add_subcommand("map", "Compute concept maps, masks and proximities");
  map->add_option("--features", f.features, "Feature stack to map");
  map->add_flag("--no-upsample", f.no_upsample, "Skip input-resolution maps and masks");

  auto* similarity = app.add_subcommand("similarity", "Grassmann distances between concepts");
  similarity->add_option("--anchor", f.anchor, "Index of the concept the rows are sorted against");

  auto* relevance = app.add_subcommand("relevance", "Concept relevances from attribution stacks");
  relevance->add_option("--attributions", f.attributions, "Attribution stacks");

  auto* sdc = app.add_subcommand("sdc", "Emit concept flipping jobs, or ingest their accuracies");
  sdc->add_option("--order", f.order, "relevance, random or both")->check(CLI::IsMember({"relevance", "random", "both"}));
  sdc->add_option("--relevance", f.relevance, "Relevance table (.json) for the relevance order");
  sdc->add_option("--results", f.results, "Accuracy results to ingest instead of emitting jobs");

  auto* report = app.add_subcommand("report", "Summarize the artifacts under --out");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ExitCode::kUsage);
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    const RunConfig c = effective_config(app, *sub, f);
    if (sub == discover) return cmd_discover(c);
    if (sub == map) return cmd_map(c);
    if (sub == similarity) return cmd_similarity(c);
    if (sub == relevance) return cmd_relevance(c);
    if (sub == sdc) return cmd_sdc(c, f.order);
    if (sub == report) return cmd_report(c);
    return static_cast<int>(ExitCode::kUsage);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kIo);
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kInternal);
  }
}

}  // namespace ssccd::cli
