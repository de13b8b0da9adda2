#include "ssccd/sdc.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "ssccd/error.hpp"
#include "ssccd/npy.hpp"
#include "ssccd/random.hpp"

namespace ssccd {

std::string variant_tag(FlipOrder order) {
  return order == FlipOrder::kRelevance ? "relevance_order" : "random_order";
}

FlipOrder parse_variant_tag(const std::string& tag) {
  if (tag == "relevance_order") return FlipOrder::kRelevance;
  if (tag == "random_order") return FlipOrder::kRandom;
  throw ValidationError("unknown SDC variant_tag '" + tag + "'");
}

FlipPlan build_flip_plan(const std::vector<std::vector<ConceptMask>>& masks,
                         const RelevanceTable& relevances, FlipOrder order, std::uint64_t seed) {
  FlipPlan plan;
  plan.order = order;
  plan.seed = seed;
  if (masks.empty()) return plan;
  const std::size_t n_samples = masks.front().size();

  std::map<std::string, std::size_t> relevance_row;
  for (std::size_t s = 0; s < relevances.sample_ids.size(); ++s) relevance_row.emplace(relevances.sample_ids[s], s);

  for (std::size_t s = 0; s < n_samples; ++s) {
    const ConceptMask& first = masks.front()[s];
    SampleFlipPlan sp;
    sp.sample_id = first.sample_id;
    sp.rows = first.rows;
    sp.cols = first.cols;

    struct Candidate {
      std::size_t index;
      bool activated;
      double relevance;
    };
    std::vector<Candidate> candidates;
    for (std::size_t k = 0; k < masks.size(); ++k) {
      if (masks[k].size() != n_samples) throw ValidationError("build_flip_plan: ragged mask set");
      const ConceptMask& m = masks[k][s];
      if (m.space != Space::kInput) throw ValidationError("build_flip_plan: masks must be in input space");
      if (m.sample_id != sp.sample_id || m.rows != sp.rows || m.cols != sp.cols) {
        throw ValidationError("build_flip_plan: masks disagree on sample order or resolution");
      }
      Candidate c{k, !m.empty(), 0.0};
      if (c.activated && order == FlipOrder::kRelevance) {
        const auto row = relevance_row.find(sp.sample_id);
        const auto col = relevances.index_of(m.concept_id);
        if (row == relevance_row.end() || !col) {
          throw ValidationError("build_flip_plan: no relevance for activated concept '" + m.concept_id +
                                "' on sample '" + sp.sample_id + "'");
        }
        c.relevance = relevances.per_sample(static_cast<Eigen::Index>(row->second), static_cast<Eigen::Index>(*col));
        if (std::isnan(c.relevance)) {
          throw ValidationError("build_flip_plan: relevance of activated concept '" + m.concept_id +
                                "' on sample '" + sp.sample_id + "' is undefined");
        }
      }
      candidates.push_back(c);
    }

    if (order == FlipOrder::kRelevance) {
      std::sort(candidates.begin(), candidates.end(), [&](const Candidate& a, const Candidate& b) {
        if (a.activated != b.activated) return a.activated;
        if (a.activated && a.relevance != b.relevance) return a.relevance > b.relevance;
        return masks[a.index][s].concept_id < masks[b.index][s].concept_id;
      });
    } else {
      Rng rng(derive_seed(seed, s));
      shuffle(candidates, rng);
    }

    std::vector<std::uint8_t> cumulative(sp.rows * sp.cols, 0);
    std::size_t occluded = 0;
    for (const auto& c : candidates) {
      const ConceptMask& m = masks[c.index][s];
      for (std::size_t p = 0; p < cumulative.size(); ++p) {
        if (m.mask[p] && !cumulative[p]) {
          cumulative[p] = 1;
          ++occluded;
        }
      }
      sp.steps.push_back({m.concept_id, cumulative,
                          static_cast<double>(occluded) / static_cast<double>(cumulative.size())});
    }
    plan.samples.push_back(std::move(sp));
  }
  return plan;
}

std::size_t JobManifest::job_count() const {
  std::size_t n = 0;
  for (const auto& s : samples) n += s.steps.size();
  return n;
}

nlohmann::json JobManifest::to_json() const {
  nlohmann::json js = nlohmann::json::array();
  for (const auto& s : samples) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& st : s.steps) {
      steps.push_back({{"step", st.step}, {"mask_path", st.mask_path}, {"occluded_fraction", st.occluded_fraction}});
    }
    js.push_back({{"sample_id", s.sample_id}, {"steps", steps}});
  }
  return {{"samples", js}, {"variant_tag", variant_tag}, {"seed", seed}};
}

JobManifest JobManifest::from_json(const nlohmann::json& j) {
  JobManifest m;
  try {
    m.variant_tag = j.at("variant_tag").get<std::string>();
    parse_variant_tag(m.variant_tag);
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& js : j.at("samples")) {
      JobSample s;
      s.sample_id = js.at("sample_id").get<std::string>();
      double previous = 0.0;
      for (const auto& st : js.at("steps")) {
        JobStep step{st.at("step").get<std::size_t>(), st.at("mask_path").get<std::string>(),
                     st.at("occluded_fraction").get<double>()};
        if (step.step != s.steps.size() + 1) throw ValidationError("job manifest: steps must be numbered 1..K");
        if (step.occluded_fraction < previous || step.occluded_fraction > 1.0) {
          throw ValidationError("job manifest: occluded_fraction must be non-decreasing within [0, 1]");
        }
        previous = step.occluded_fraction;
        s.steps.push_back(std::move(step));
      }
      m.samples.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("job manifest: ") + e.what());
  }
  return m;
}

JobManifest emit_occlusion_jobs(const FlipPlan& plan, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir / "masks");
  JobManifest manifest;
  manifest.variant_tag = variant_tag(plan.order);
  manifest.seed = plan.seed;
  for (std::size_t s = 0; s < plan.samples.size(); ++s) {
    const auto& sp = plan.samples[s];
    JobSample js;
    js.sample_id = sp.sample_id;
    const std::vector<std::size_t> shape{sp.rows, sp.cols};
    for (std::size_t k = 0; k < sp.steps.size(); ++k) {
      const std::string rel = "masks/s" + std::to_string(s) + "_step" + std::to_string(k + 1) + ".npy";
      npy::write_u8(out_dir / rel, shape, sp.steps[k].cumulative);
      js.steps.push_back({k + 1, rel, sp.steps[k].occluded_fraction});
    }
    manifest.samples.push_back(std::move(js));
  }
  write_json(out_dir / "jobs.json", manifest.to_json());
  return manifest;
}

nlohmann::json AccuracyResults::to_json() const {
  nlohmann::json steps_json = nlohmann::json::array();
  for (const auto& s : steps) {
    steps_json.push_back({{"step", s.step}, {"accuracy", s.accuracy}, {"n_evaluated", s.n_evaluated}});
  }
  return {{"variant_tag", variant_tag}, {"steps", steps_json}};
}

AccuracyResults AccuracyResults::from_json(const nlohmann::json& j) {
  AccuracyResults r;
  try {
    r.variant_tag = j.at("variant_tag").get<std::string>();
    parse_variant_tag(r.variant_tag);
    for (const auto& s : j.at("steps")) {
      AccuracyStep step{s.at("step").get<std::size_t>(), s.at("accuracy").get<double>(),
                        s.at("n_evaluated").get<std::size_t>()};
      if (step.accuracy < 0.0 || step.accuracy > 1.0) {
        throw ValidationError("accuracy results: accuracy must lie in [0, 1]");
      }
      r.steps.push_back(step);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("accuracy results: ") + e.what());
  }
  return r;
}

SdcCurve ingest_accuracy(const AccuracyResults& results, const JobManifest& manifest) {
  if (results.variant_tag != manifest.variant_tag) {
    throw ValidationError("ingest_accuracy: results are for '" + results.variant_tag + "' but the manifest is '" +
                          manifest.variant_tag + "'");
  }
  std::map<std::size_t, std::pair<double, std::size_t>> fractions;  // step -> (sum, count)
  for (const auto& s : manifest.samples) {
    for (const auto& st : s.steps) {
      auto& [sum, count] = fractions[st.step];
      sum += st.occluded_fraction;
      ++count;
    }
  }
  std::map<std::size_t, double> accuracy;
  for (const auto& s : results.steps) {
    if (!accuracy.emplace(s.step, s.accuracy).second) {
      throw ValidationError("ingest_accuracy: duplicate step " + std::to_string(s.step));
    }
  }
  SdcCurve curve;
  curve.variant_tag = results.variant_tag;
  for (const auto& [step, acc] : fractions) {
    const auto it = accuracy.find(step);
    if (it == accuracy.end()) throw ValidationError("ingest_accuracy: missing step " + std::to_string(step));
    curve.points.push_back({step, acc.first / static_cast<double>(acc.second), it->second});
  }
  for (const auto& [step, acc] : accuracy) {
    if (!fractions.count(step)) throw ValidationError("ingest_accuracy: unknown step " + std::to_string(step));
  }
  return curve;
}

void write_curves_csv(const std::vector<SdcCurve>& curves, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "variant_tag,step,occluded_fraction,accuracy\n";
  char buf[96];
  for (const auto& c : curves) {
    for (const auto& p : c.points) {
      std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g", p.step, p.occluded_fraction, p.accuracy);
      out << c.variant_tag << ',' << buf << '\n';
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace ssccd
