#include "ssccd/ssc_solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "ssccd/error.hpp"
#include "ssccd/random.hpp"

namespace ssccd {

namespace {

// Active-set growth per outer iteration.
constexpr std::size_t kInitialSupport = 32;
constexpr std::size_t kSupportGrowth = 32;

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

template <typename T>
T json_or(const nlohmann::json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

// Solves the columns listed in `columns` against the sub-dictionary they form.
// Returned triplets use positions within `columns`.
std::vector<ColumnSolution> solve_subset(const Eigen::MatrixXd& normalized,
                                         const SolverConfig& cfg) {
  const Eigen::Index n = normalized.cols();
  std::vector<ColumnSolution> out(static_cast<std::size_t>(n));
#if defined(_OPENMP)
#pragma omp parallel for schedule(dynamic, 16)
#endif
  for (Eigen::Index j = 0; j < n; ++j) {
    out[static_cast<std::size_t>(j)] = solve_column(normalized, j, cfg);
  }
  return out;
}

SelfRepresentation assemble(const std::vector<ColumnSolution>& solutions,
                            const std::vector<std::size_t>& positions, std::size_t n) {
  std::vector<Eigen::Triplet<double>> triplets;
  SelfRepresentation rep;
  rep.column_l1 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < solutions.size(); ++k) {
    const auto& s = solutions[k];
    const auto col = static_cast<Eigen::Index>(positions[k]);
    double l1 = 0.0;
    for (std::size_t t = 0; t < s.support.size(); ++t) {
      if (s.values[t] == 0.0) continue;
      const auto row = static_cast<Eigen::Index>(positions[static_cast<std::size_t>(s.support[t])]);
      triplets.emplace_back(row, col, s.values[t]);
      l1 += std::abs(s.values[t]);
    }
    rep.column_l1(col) = l1;
  }
  rep.coefficients.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  rep.coefficients.setFromTriplets(triplets.begin(), triplets.end());
  rep.coefficients.makeCompressed();
  return rep;
}

}  // namespace

void SolverConfig::validate() const {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("gamma must be a finite value >= 0");
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("tau must lie in (0, 1]");
  if (n_batches == 0 || batch_size == 0) throw ConfigError("n_batches and batch_size must be positive");
  if (!(feature_subsample_ratio > 0.0 && feature_subsample_ratio <= 1.0)) {
    throw ConfigError("feature_subsample_ratio must lie in (0, 1]");
  }
  if (!(outlier_percentile > 0.0 && outlier_percentile < 1.0)) {
    throw ConfigError("outlier_percentile must lie in (0, 1)");
  }
  if (max_iter == 0) throw ConfigError("max_iter must be positive");
  if (!(tol > 0.0)) throw ConfigError("tol must be positive");
}

nlohmann::json SolverConfig::to_json() const {
  return {{"gamma", gamma},
          {"tau", tau},
          {"n_batches", n_batches},
          {"batch_size", batch_size},
          {"feature_subsample_ratio", feature_subsample_ratio},
          {"outlier_percentile", outlier_percentile},
          {"seed", seed},
          {"max_iter", max_iter},
          {"tol", tol}};
}

SolverConfig SolverConfig::from_json(const nlohmann::json& j) { return from_json(j, SolverConfig{}); }

SolverConfig SolverConfig::from_json(const nlohmann::json& j, const SolverConfig& d) {
  SolverConfig c;
  try {
    c.gamma = json_or(j, "gamma", d.gamma);
    c.tau = json_or(j, "tau", d.tau);
    c.n_batches = json_or(j, "n_batches", d.n_batches);
    c.batch_size = json_or(j, "batch_size", d.batch_size);
    c.feature_subsample_ratio = json_or(j, "feature_subsample_ratio", d.feature_subsample_ratio);
    c.outlier_percentile = json_or(j, "outlier_percentile", d.outlier_percentile);
    c.seed = json_or(j, "seed", d.seed);
    c.max_iter = json_or(j, "max_iter", d.max_iter);
    c.tol = json_or(j, "tol", d.tol);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("solver config: ") + e.what());
  }
  c.validate();
  return c;
}

std::size_t SelfRepresentation::inlier_count() const {
  return static_cast<std::size_t>(std::count(inlier_mask.begin(), inlier_mask.end(), true));
}

std::vector<std::size_t> SelfRepresentation::inlier_indices() const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < inlier_mask.size(); ++i) {
    if (inlier_mask[i]) idx.push_back(i);
  }
  return idx;
}

Dictionary subsample_dictionary(const FeatureStack& stack, const SolverConfig& cfg) {
  cfg.validate();
  const std::size_t wanted = cfg.n_batches * cfg.batch_size;
  if (wanted > stack.num_samples()) {
    throw ConfigError("subsample_dictionary: " + std::to_string(wanted) +
                      " samples requested (n_batches * batch_size) but only " +
                      std::to_string(stack.num_samples()) + " available");
  }
  Rng sample_rng(derive_seed(cfg.seed, 0));
  Rng feature_rng(derive_seed(cfg.seed, 1));

  std::vector<std::size_t> samples = sample_without_replacement(stack.num_samples(), wanted, sample_rng);
  for (std::size_t b = 0; b < cfg.n_batches; ++b) {
    auto first = samples.begin() + static_cast<std::ptrdiff_t>(b * cfg.batch_size);
    std::sort(first, first + static_cast<std::ptrdiff_t>(cfg.batch_size));
  }

  const std::size_t f = stack.features();
  const auto reduced = static_cast<std::size_t>(
      std::max(1L, std::lround(cfg.feature_subsample_ratio * static_cast<double>(f))));
  std::vector<std::size_t> coords = sample_without_replacement(f, std::min(reduced, f), feature_rng);
  std::sort(coords.begin(), coords.end());

  Dictionary dict;
  dict.feature_coords = coords;
  const std::size_t per_sample = stack.locations_per_sample();
  dict.atoms.resize(static_cast<Eigen::Index>(coords.size()),
                    static_cast<Eigen::Index>(samples.size() * per_sample));
  dict.locations.reserve(samples.size() * per_sample);
  Eigen::Index col = 0;
  for (std::size_t s : samples) {
    for (std::size_t r = 0; r < stack.height(); ++r) {
      for (std::size_t c = 0; c < stack.width(); ++c, ++col) {
        const auto v = stack.at(s, r, c);
        for (std::size_t k = 0; k < coords.size(); ++k) {
          dict.atoms(static_cast<Eigen::Index>(k), col) = v[coords[k]];
        }
        dict.locations.push_back({s, r, c});
      }
    }
  }
  return dict;
}

Dictionary drop_zero_columns(const Dictionary& dictionary) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < dictionary.atoms.cols(); ++j) {
    if (dictionary.atoms.col(j).squaredNorm() > 0.0) keep.push_back(j);
  }
  Dictionary out;
  out.feature_coords = dictionary.feature_coords;
  out.atoms.resize(dictionary.atoms.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    out.atoms.col(static_cast<Eigen::Index>(k)) = dictionary.atoms.col(keep[k]);
    out.locations.push_back(dictionary.locations[static_cast<std::size_t>(keep[k])]);
  }
  return out;
}

Eigen::MatrixXd normalize_columns(const Eigen::MatrixXd& atoms) {
  if (!atoms.allFinite()) throw ValidationError("dictionary contains non-finite entries");
  Eigen::MatrixXd out = atoms;
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    const double norm = out.col(j).norm();
    if (norm == 0.0) throw ValidationError("dictionary column " + std::to_string(j) + " is zero");
    out.col(j) /= norm;
  }
  return out;
}

double elastic_net_objective(const Eigen::MatrixXd& normalized, Eigen::Index j,
                             const Eigen::VectorXd& c, const SolverConfig& cfg) {
  const Eigen::VectorXd r = normalized.col(j) - normalized * c;
  return cfg.tau * c.lpNorm<1>() + 0.5 * (1.0 - cfg.tau) * c.squaredNorm() +
         0.5 * cfg.gamma * r.squaredNorm();
}

ColumnSolution solve_column(const Eigen::MatrixXd& X, Eigen::Index j, const SolverConfig& cfg,
                            bool record_history) {
  ColumnSolution sol;
  const Eigen::Index n = X.cols();
  if (cfg.gamma == 0.0 || n < 2) {
    sol.converged = true;
    return sol;
  }
  // A zero coordinate is optimal iff |gamma * x_i^T r| <= tau. Optimality is
  // checked in objective units: every subgradient residual must be <= tol.
  const double threshold = (cfg.tau + cfg.tol) / cfg.gamma;
  const double denom = cfg.gamma + (1.0 - cfg.tau);

  Eigen::VectorXd residual = X.col(j);
  Eigen::VectorXd corr = X.transpose() * residual;
  corr(j) = 0.0;

  std::vector<char> in_support(static_cast<std::size_t>(n), 0);
  auto grow = [&](std::size_t limit) {
    std::vector<Eigen::Index> violators;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i != j && !in_support[static_cast<std::size_t>(i)] &&
          std::abs(corr(i)) > threshold) {
        violators.push_back(i);
      }
    }
    const std::size_t take = std::min(limit, violators.size());
    std::partial_sort(violators.begin(), violators.begin() + static_cast<std::ptrdiff_t>(take),
                      violators.end(), [&](Eigen::Index a, Eigen::Index b) {
                        const double da = std::abs(corr(a)), db = std::abs(corr(b));
                        return da != db ? da > db : a < b;
                      });
    for (std::size_t k = 0; k < take; ++k) {
      in_support[static_cast<std::size_t>(violators[k])] = 1;
      sol.support.push_back(violators[k]);
      sol.values.push_back(0.0);
    }
    return take;
  };

  if (grow(kInitialSupport) == 0) {
    sol.converged = true;
    return sol;
  }

  double l1 = 0.0, l2sq = 0.0;
  while (true) {
    bool inner_converged = false;
    while (sol.sweeps < cfg.max_iter) {
      double max_delta = 0.0;
      for (std::size_t k = 0; k < sol.support.size(); ++k) {
        const auto i = sol.support[k];
        const double old = sol.values[k];
        const double z = cfg.gamma * (X.col(i).dot(residual) + old);
        const double updated = soft_threshold(z, cfg.tau) / denom;
        const double delta = updated - old;
        if (delta != 0.0) {
          residual.noalias() -= delta * X.col(i);
          sol.values[k] = updated;
          max_delta = std::max(max_delta, std::abs(delta));
        }
      }
      ++sol.sweeps;
      if (record_history) {
        l1 = 0.0;
        l2sq = 0.0;
        for (double v : sol.values) {
          l1 += std::abs(v);
          l2sq += v * v;
        }
        sol.objective_history.push_back(cfg.tau * l1 + 0.5 * (1.0 - cfg.tau) * l2sq +
                                        0.5 * cfg.gamma * residual.squaredNorm());
      }
      if (max_delta < cfg.tol) {
        inner_converged = true;
        break;
      }
    }
    if (!inner_converged) break;  // sweep budget exhausted

    // Small updates do not yet mean small subgradient residuals on the
    // active set; keep sweeping until they do.
    double active_violation = 0.0;
    for (std::size_t k = 0; k < sol.support.size(); ++k) {
      const double g = cfg.gamma * X.col(sol.support[k]).dot(residual) - (1.0 - cfg.tau) * sol.values[k];
      const double v = sol.values[k];
      const double r = v > 0 ? std::abs(g - cfg.tau) : v < 0 ? std::abs(g + cfg.tau) : std::max(0.0, std::abs(g) - cfg.tau);
      active_violation = std::max(active_violation, r);
    }
    if (active_violation > cfg.tol) {
      if (sol.sweeps >= cfg.max_iter) break;
      continue;
    }

    // KKT check over the coordinates outside the active set.
    corr.noalias() = X.transpose() * residual;
    corr(j) = 0.0;
    if (grow(kSupportGrowth) == 0) {
      sol.converged = true;
      break;
    }
  }
  return sol;
}

SelfRepresentation solve_self_representation(const Dictionary& dictionary, const SolverConfig& cfg) {
  cfg.validate();
  const Eigen::MatrixXd normalized = normalize_columns(dictionary.atoms);
  const auto n = static_cast<std::size_t>(normalized.cols());
  std::vector<std::size_t> positions(n);
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  SelfRepresentation rep = assemble(solve_subset(normalized, cfg), positions, n);
  rep.inlier_mask.assign(n, true);
  rep.dictionary_index = dictionary.locations;
  return rep;
}

double quantile_linear(std::vector<double> values, double p) {
  if (values.empty()) throw ValidationError("quantile of an empty set");
  std::sort(values.begin(), values.end());
  const double h = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

SelfRepresentation remove_outliers_and_refit(const SelfRepresentation& rep,
                                             const Dictionary& dictionary,
                                             const SolverConfig& cfg) {
  cfg.validate();
  const std::size_t n = rep.size();
  if (static_cast<std::size_t>(dictionary.atoms.cols()) != n) {
    throw ValidationError("remove_outliers_and_refit: representation and dictionary sizes differ");
  }
  std::vector<double> l1;
  const auto current = rep.inlier_indices();
  for (std::size_t i : current) l1.push_back(rep.column_l1(static_cast<Eigen::Index>(i)));
  const double cut = quantile_linear(l1, cfg.outlier_percentile);

  std::vector<std::size_t> kept;
  for (std::size_t i : current) {
    if (!(rep.column_l1(static_cast<Eigen::Index>(i)) > cut)) kept.push_back(i);
  }
  if (kept.empty()) throw ConfigError("outlier removal flagged every column");

  const Eigen::MatrixXd normalized = normalize_columns(dictionary.atoms);
  Eigen::MatrixXd sub(normalized.rows(), static_cast<Eigen::Index>(kept.size()));
  for (std::size_t k = 0; k < kept.size(); ++k) {
    sub.col(static_cast<Eigen::Index>(k)) = normalized.col(static_cast<Eigen::Index>(kept[k]));
  }
  SelfRepresentation out = assemble(solve_subset(sub, cfg), kept, n);
  out.inlier_mask.assign(n, false);
  for (std::size_t i : kept) out.inlier_mask[i] = true;
  out.dictionary_index = rep.dictionary_index;
  out.outlier_threshold = cut;
  return out;
}

void save_self_representation(const SelfRepresentation& rep, const SolverConfig& cfg,
                              const std::filesystem::path& path) {
  std::vector<std::tuple<Eigen::Index, Eigen::Index, double>> entries;
  for (Eigen::Index col = 0; col < rep.coefficients.outerSize(); ++col) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(rep.coefficients, col); it; ++it) {
      entries.emplace_back(it.row(), it.col(), it.value());
    }
  }
  std::sort(entries.begin(), entries.end());

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "# rows=" << rep.coefficients.rows() << " cols=" << rep.coefficients.cols()
      << " nnz=" << entries.size() << "\n";
  char buf[64];
  for (const auto& [r, c, v] : entries) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << r << ' ' << c << ' ' << buf << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());

  nlohmann::json side;
  side["column_l1"] = std::vector<double>(rep.column_l1.data(), rep.column_l1.data() + rep.column_l1.size());
  side["inlier_mask"] = rep.inlier_mask;
  side["seed"] = cfg.seed;
  side["config"] = cfg.to_json();
  nlohmann::json index = nlohmann::json::array();
  for (const auto& l : rep.dictionary_index) index.push_back({l.sample, l.row, l.col});
  side["dictionary_index"] = index;
  side["outlier_threshold"] =
      rep.outlier_threshold ? nlohmann::json(*rep.outlier_threshold) : nlohmann::json(nullptr);
  auto side_path = path;
  side_path += ".json";
  write_json(side_path, side);
}

SelfRepresentation load_self_representation(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open self-representation: " + path.string());
  std::string header;
  std::getline(in, header);
  long long rows = -1, cols = -1, nnz = -1;
  if (std::sscanf(header.c_str(), "# rows=%lld cols=%lld nnz=%lld", &rows, &cols, &nnz) != 3 ||
      rows < 0 || rows != cols) {
    throw ValidationError("malformed triplet header in " + path.string());
  }
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(nnz));
  long long r = 0, c = 0;
  double v = 0.0;
  while (in >> r >> c >> v) {
    if (r < 0 || c < 0 || r >= rows || c >= cols) {
      throw ValidationError("triplet index out of range in " + path.string());
    }
    triplets.emplace_back(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c), v);
  }
  if (static_cast<long long>(triplets.size()) != nnz) {
    throw ValidationError("triplet count does not match header in " + path.string());
  }
  SelfRepresentation rep;
  rep.coefficients.resize(rows, cols);
  rep.coefficients.setFromTriplets(triplets.begin(), triplets.end());
  rep.coefficients.makeCompressed();

  auto side_path = path;
  side_path += ".json";
  const nlohmann::json side = read_json(side_path);
  try {
    const auto l1 = side.at("column_l1").get<std::vector<double>>();
    rep.column_l1 = Eigen::Map<const Eigen::VectorXd>(l1.data(), static_cast<Eigen::Index>(l1.size()));
    rep.inlier_mask = side.at("inlier_mask").get<std::vector<bool>>();
    for (const auto& e : side.at("dictionary_index")) {
      rep.dictionary_index.push_back(
          {e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>(), e.at(2).get<std::size_t>()});
    }
    if (!side.at("outlier_threshold").is_null()) {
      rep.outlier_threshold = side.at("outlier_threshold").get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("self-representation sidecar " + side_path.string() + ": " + e.what());
  }
  if (static_cast<long long>(rep.inlier_mask.size()) != rows ||
      rep.column_l1.size() != rows) {
    throw ValidationError("self-representation sidecar size mismatch: " + side_path.string());
  }
  return rep;
}

}  // namespace ssccd
