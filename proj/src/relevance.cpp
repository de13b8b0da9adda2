#include "ssccd/relevance.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "ssccd/error.hpp"

namespace ssccd {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string format_value(double v) {
  char buf[32];
  if (std::isnan(v)) return "n/a";
  if (std::abs(v) >= 0.1 || v == 0.0) {
    std::snprintf(buf, sizeof(buf), "%.1f", v);
  } else {
    std::snprintf(buf, sizeof(buf), "%.2g", v);
  }
  return buf;
}

nlohmann::json nullable(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }
double from_nullable(const nlohmann::json& j) { return j.is_null() ? kNaN : j.get<double>(); }

}  // namespace

std::optional<double> concept_relevance(const ConceptMask& mask, const AttributionStack& attribution,
                                        std::size_t sample) {
  if (mask.space != attribution.space()) {
    throw ValidationError("concept_relevance: " + to_string(mask.space) + "-space mask used with " +
                          to_string(attribution.space()) + "-space attributions");
  }
  if (mask.rows != attribution.rows() || mask.cols != attribution.cols()) {
    throw ValidationError("concept_relevance: mask resolution " + std::to_string(mask.rows) + "x" +
                          std::to_string(mask.cols) + " does not match attribution resolution " +
                          std::to_string(attribution.rows()) + "x" + std::to_string(attribution.cols()));
  }
  if (sample >= attribution.manifest().num_samples()) {
    throw ValidationError("concept_relevance: sample index out of range");
  }
  const auto values = attribution.sample(sample);
  double sum = 0.0;
  bool any = false;
  for (std::size_t i = 0; i < mask.mask.size(); ++i) {
    if (mask.mask[i]) {
      sum += values[i];
      any = true;
    }
  }
  if (!any) return std::nullopt;
  return sum;
}

std::optional<std::size_t> RelevanceTable::index_of(const std::string& concept_id) const {
  const auto it = std::find(concept_ids.begin(), concept_ids.end(), concept_id);
  if (it == concept_ids.end()) return std::nullopt;
  return static_cast<std::size_t>(it - concept_ids.begin());
}

RelevanceTable aggregate_class_relevance(const SampleScores& scores) {
  const auto n_concepts = scores.concept_ids.size();
  if (static_cast<std::size_t>(scores.scores.cols()) != n_concepts ||
      static_cast<std::size_t>(scores.scores.rows()) != scores.sample_ids.size()) {
    throw ValidationError("aggregate_class_relevance: score matrix shape does not match its labels");
  }
  std::vector<double> mean(n_concepts, kNaN), zero_filled(n_concepts, kNaN);
  std::vector<std::size_t> count(n_concepts, 0);
  for (std::size_t k = 0; k < n_concepts; ++k) {
    double sum = 0.0;
    for (Eigen::Index s = 0; s < scores.scores.rows(); ++s) {
      const double v = scores.scores(s, static_cast<Eigen::Index>(k));
      if (std::isnan(v)) continue;
      sum += v;
      ++count[k];
    }
    if (count[k] > 0) mean[k] = sum / static_cast<double>(count[k]);
    if (scores.scores.rows() > 0) zero_filled[k] = sum / static_cast<double>(scores.scores.rows());
  }

  std::vector<std::size_t> order(n_concepts);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const bool ia = count[a] > 0, ib = count[b] > 0;
    if (ia != ib) return ia;
    if (ia && mean[a] != mean[b]) return mean[a] > mean[b];
    return scores.concept_ids[a] < scores.concept_ids[b];
  });

  RelevanceTable t;
  t.sample_ids = scores.sample_ids;
  t.attribution_method = scores.attribution_method;
  t.space = scores.space;
  t.per_sample.resize(scores.scores.rows(), static_cast<Eigen::Index>(n_concepts));
  for (std::size_t k = 0; k < n_concepts; ++k) {
    const std::size_t src = order[k];
    t.concept_ids.push_back(scores.concept_ids[src]);
    t.per_sample.col(static_cast<Eigen::Index>(k)) = scores.scores.col(static_cast<Eigen::Index>(src));
    t.per_class.push_back(mean[src]);
    t.per_class_zero_filled.push_back(zero_filled[src]);
    t.activated_samples.push_back(count[src]);
  }
  return t;
}

SampleScores score_samples(const std::vector<std::vector<ConceptMask>>& masks,
                           const AttributionStack& attribution) {
  SampleScores out;
  out.attribution_method = attribution.method_tag();
  out.space = attribution.space();
  if (masks.empty()) return out;

  std::unordered_map<std::string, std::size_t> attribution_index;
  const auto& ids = attribution.manifest().sample_ids;
  for (std::size_t i = 0; i < ids.size(); ++i) attribution_index.emplace(ids[i], i);

  for (const auto& m : masks.front()) out.sample_ids.push_back(m.sample_id);
  out.scores = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(out.sample_ids.size()),
                                         static_cast<Eigen::Index>(masks.size()), kNaN);
  for (std::size_t k = 0; k < masks.size(); ++k) {
    if (masks[k].size() != out.sample_ids.size()) {
      throw ValidationError("score_samples: concepts were mapped on different sample sets");
    }
    out.concept_ids.push_back(masks[k].empty() ? std::string() : masks[k].front().concept_id);
    for (std::size_t s = 0; s < masks[k].size(); ++s) {
      const auto& mask = masks[k][s];
      if (mask.sample_id != out.sample_ids[s]) {
        throw ValidationError("score_samples: sample order differs between concepts");
      }
      const auto it = attribution_index.find(mask.sample_id);
      if (it == attribution_index.end()) {
        throw ValidationError("score_samples: no attribution for sample '" + mask.sample_id + "'");
      }
      if (const auto r = concept_relevance(mask, attribution, it->second)) {
        out.scores(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(k)) = *r;
      }
    }
  }
  return out;
}

std::vector<double> average_ranks(const std::vector<double>& values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman_rank_consistency(const RelevanceTable& a, const RelevanceTable& b) {
  if (a.concept_ids.size() != b.concept_ids.size()) {
    throw ValidationError("spearman_rank_consistency: tables cover different concept sets");
  }
  std::vector<double> xa, xb;
  for (std::size_t k = 0; k < a.concept_ids.size(); ++k) {
    const auto j = b.index_of(a.concept_ids[k]);
    if (!j) throw ValidationError("spearman_rank_consistency: concept '" + a.concept_ids[k] + "' missing");
    if (!a.activated(k) || !b.activated(*j)) continue;
    xa.push_back(a.per_class[k]);
    xb.push_back(b.per_class[*j]);
  }
  if (xa.size() < 2) throw ValidationError("spearman_rank_consistency: fewer than 2 comparable concepts");
  const auto ra = average_ranks(xa), rb = average_ranks(xb);
  const double n = static_cast<double>(ra.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) throw NumericalError("spearman_rank_consistency: constant ranking");
  return std::clamp(cov / std::sqrt(va * vb), -1.0, 1.0);
}

std::string format_bracketed(const RelevanceTable& table) {
  std::string out;
  for (std::size_t k = 0; k < table.concept_ids.size(); ++k) {
    if (k) out += ", ";
    out += table.concept_ids[k] + " (" + format_value(table.per_class[k]) + ")";
  }
  return out;
}

nlohmann::json RelevanceTable::to_json() const {
  nlohmann::json j;
  j["concept_ids"] = concept_ids;
  j["sample_ids"] = sample_ids;
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index s = 0; s < per_sample.rows(); ++s) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index k = 0; k < per_sample.cols(); ++k) row.push_back(nullable(per_sample(s, k)));
    rows.push_back(row);
  }
  j["per_sample"] = rows;
  nlohmann::json pc = nlohmann::json::array(), zf = nlohmann::json::array();
  for (double v : per_class) pc.push_back(nullable(v));
  for (double v : per_class_zero_filled) zf.push_back(nullable(v));
  j["per_class"] = pc;
  j["per_class_zero_filled"] = zf;
  j["activated_samples"] = activated_samples;
  j["attribution_method"] = attribution_method;
  j["space"] = to_string(space);
  j["non_activated_excluded"] = true;
  return j;
}

RelevanceTable RelevanceTable::from_json(const nlohmann::json& j) {
  RelevanceTable t;
  try {
    t.concept_ids = j.at("concept_ids").get<std::vector<std::string>>();
    t.sample_ids = j.at("sample_ids").get<std::vector<std::string>>();
    const auto& rows = j.at("per_sample");
    t.per_sample.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.concept_ids.size()));
    for (std::size_t s = 0; s < rows.size(); ++s) {
      for (std::size_t k = 0; k < t.concept_ids.size(); ++k) {
        t.per_sample(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(k)) = from_nullable(rows[s].at(k));
      }
    }
    for (const auto& v : j.at("per_class")) t.per_class.push_back(from_nullable(v));
    for (const auto& v : j.at("per_class_zero_filled")) t.per_class_zero_filled.push_back(from_nullable(v));
    t.activated_samples = j.at("activated_samples").get<std::vector<std::size_t>>();
    t.attribution_method = j.at("attribution_method").get<std::string>();
    t.space = parse_space(j.at("space").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("relevance table: ") + e.what());
  }
  return t;
}

void write_relevance_csv(const RelevanceTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  char buf[64];
  auto cell = [&](double v) -> std::string {
    if (std::isnan(v)) return "";
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
  };
  out << "sample_id";
  for (const auto& id : table.concept_ids) out << ',' << id;
  out << '\n';
  for (Eigen::Index s = 0; s < table.per_sample.rows(); ++s) {
    out << table.sample_ids[static_cast<std::size_t>(s)];
    for (Eigen::Index k = 0; k < table.per_sample.cols(); ++k) out << ',' << cell(table.per_sample(s, k));
    out << '\n';
  }
  out << "class_mean";
  for (double v : table.per_class) out << ',' << cell(v);
  out << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

ProximityReport normalized_proximity_report(const std::vector<ConceptMapSet>& maps,
                                            const std::vector<ConceptSubspace>& concepts) {
  if (maps.size() != concepts.size()) {
    throw ValidationError("normalized_proximity_report: one map set per concept required");
  }
  ProximityReport r;
  for (std::size_t k = 0; k < maps.size(); ++k) {
    if (maps[k].concept_id != concepts[k].concept_id) {
      throw ValidationError("normalized_proximity_report: map set order differs from concept order");
    }
    double sum = 0.0;
    for (const auto& m : maps[k].maps) sum += normalized_proximity(m.proximity, concepts[k].threshold_angle);
    r.concept_ids.push_back(concepts[k].concept_id);
    r.mean_normalized.push_back(maps[k].maps.empty() ? kNaN : sum / static_cast<double>(maps[k].maps.size()));
  }
  return r;
}

ProximityReport normalized_proximity_report(const std::vector<StoredMaps>& maps) {
  ProximityReport r;
  for (const auto& m : maps) {
    double sum = 0.0;
    for (double p : m.proximity) sum += normalized_proximity(p, m.threshold_angle);
    r.concept_ids.push_back(m.concept_id);
    r.mean_normalized.push_back(m.proximity.empty() ? kNaN : sum / static_cast<double>(m.proximity.size()));
  }
  return r;
}

std::string format_proximity(const ProximityReport& report) {
  std::string out = "(";
  char buf[32];
  for (std::size_t k = 0; k < report.mean_normalized.size(); ++k) {
    if (k) out += ", ";
    std::snprintf(buf, sizeof(buf), "%.2f", report.mean_normalized[k]);
    out += buf;
    if (!report.activated(k)) out += "*";
  }
  return out + ")";
}

}  // namespace ssccd
