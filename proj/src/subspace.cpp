#include "ssccd/subspace.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>

#include <Eigen/SVD>

#include "ssccd/error.hpp"
#include "ssccd/npy.hpp"
#include "ssccd/tensor_io.hpp"

namespace ssccd {

nlohmann::json ConceptProvenance::to_json() const {
  return {{"dataset_name", dataset_name},
          {"class_labels", class_labels},
          {"layer_id", layer_id},
          {"seed", seed},
          {"cluster_label", cluster_label}};
}

ConceptProvenance ConceptProvenance::from_json(const nlohmann::json& j) {
  ConceptProvenance p;
  p.dataset_name = j.value("dataset_name", "");
  p.class_labels = j.value("class_labels", std::vector<std::string>{});
  p.layer_id = j.value("layer_id", "");
  p.seed = j.value("seed", std::uint64_t{0});
  p.cluster_label = j.value("cluster_label", -1);
  return p;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ValidationError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  if (values.size() % 2 == 1) return values[mid];
  return 0.5 * (values[mid - 1] + values[mid]);
}

double first_angle(const Eigen::Ref<const Eigen::VectorXd>& v, const Eigen::MatrixXd& basis) {
  const Eigen::VectorXd coeffs = basis.transpose() * v;
  const double inside = coeffs.norm();
  const double outside = (v - basis * coeffs).norm();
  if (inside == 0.0 && outside == 0.0) return std::numbers::pi / 2.0;
  return std::atan2(outside, inside);
}

namespace {

double threshold_over(const Eigen::MatrixXd& members, const Eigen::MatrixXd& basis) {
  std::vector<double> angles(static_cast<std::size_t>(members.cols()));
  for (Eigen::Index j = 0; j < members.cols(); ++j) {
    angles[static_cast<std::size_t>(j)] = first_angle(members.col(j), basis);
  }
  return median(std::move(angles));
}

void require_same_ambient(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows()) {
    throw ValidationError("subspaces live in different feature spaces (F = " +
                          std::to_string(a.rows()) + " vs " + std::to_string(b.rows()) + ")");
  }
}

}  // namespace

ConceptSubspace fit_concept_basis(const Eigen::MatrixXd& members, const BasisOptions& options) {
  if (members.cols() < 2) throw ValidationError("fit_concept_basis: need at least 2 members");
  if (!members.allFinite()) throw ValidationError("fit_concept_basis: non-finite member entries");
  Eigen::MatrixXd data = members;
  if (options.centered) data.colwise() -= data.rowwise().mean();

  Eigen::BDCSVD<Eigen::MatrixXd> svd(data, Eigen::ComputeThinU);
  const Eigen::VectorXd& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) throw NumericalError("fit_concept_basis: member matrix has rank 0");

  const double scale = 1.0 / static_cast<double>(options.centered ? data.cols() - 1 : data.cols());
  ConceptSubspace out;
  out.spectrum.resize(static_cast<std::size_t>(s.size()));
  Eigen::Index d = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double lambda = s(i) * s(i) * scale;
    out.spectrum[static_cast<std::size_t>(i)] = lambda;
    if (lambda > options.alpha_fo * out.spectrum[0]) ++d;
  }
  out.basis = svd.matrixU().leftCols(d);
  out.member_count = static_cast<std::size_t>(members.cols());
  out.threshold_angle = threshold_over(members, out.basis);
  return out;
}

Eigen::VectorXd principal_angles(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  require_same_ambient(a, b);
  const Eigen::Index k = std::min(a.cols(), b.cols());
  if (k == 0) return Eigen::VectorXd();
  const Eigen::MatrixXd cross = a.transpose() * b;
  Eigen::JacobiSVD<Eigen::MatrixXd> cos_svd(cross);
  const Eigen::VectorXd sigma = cos_svd.singularValues().cwiseMin(1.0).cwiseMax(0.0);

  // The part of the smaller basis orthogonal to the larger subspace; its
  // singular values are the sines of the same angles.
  const Eigen::MatrixXd residual =
      a.cols() >= b.cols() ? Eigen::MatrixXd(b - a * cross) : Eigen::MatrixXd(a - b * cross.transpose());
  Eigen::JacobiSVD<Eigen::MatrixXd> sin_svd(residual);
  Eigen::VectorXd sines = sin_svd.singularValues().head(k).reverse();
  sines = sines.cwiseMin(1.0).cwiseMax(0.0);

  Eigen::VectorXd angles(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    angles(i) = sigma(i) * sigma(i) >= 0.5 ? std::asin(sines(i)) : std::acos(sigma(i));
  }
  std::sort(angles.data(), angles.data() + k);
  return angles;
}

Eigen::VectorXd principal_angles(const ConceptSubspace& a, const ConceptSubspace& b) {
  return principal_angles(a.basis, b.basis);
}

double grassmann_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return principal_angles(a, b).norm();
}

double grassmann_distance(const ConceptSubspace& a, const ConceptSubspace& b) {
  return grassmann_distance(a.basis, b.basis);
}

SimilarityMatrix similarity_matrix(const std::vector<ConceptSubspace>& concepts, std::size_t anchor) {
  if (concepts.size() < 2) throw ValidationError("similarity_matrix: need at least 2 concepts");
  if (anchor >= concepts.size()) throw ConfigError("similarity_matrix: anchor index out of range");
  const auto n = static_cast<Eigen::Index>(concepts.size());
  SimilarityMatrix sim;
  sim.anchor = anchor;
  sim.distances = Eigen::MatrixXd::Zero(n, n);
  for (const auto& c : concepts) {
    require_same_ambient(concepts.front().basis, c.basis);
    sim.concept_ids.push_back(c.concept_id);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = grassmann_distance(concepts[static_cast<std::size_t>(i)],
                                          concepts[static_cast<std::size_t>(j)]);
      sim.distances(i, j) = d;
      sim.distances(j, i) = d;
    }
  }
  sim.anchor_order.resize(concepts.size());
  std::iota(sim.anchor_order.begin(), sim.anchor_order.end(), std::size_t{0});
  const auto a = static_cast<Eigen::Index>(anchor);
  std::stable_sort(sim.anchor_order.begin(), sim.anchor_order.end(), [&](std::size_t x, std::size_t y) {
    if (x == anchor || y == anchor) return x == anchor && y != anchor;
    return sim.distances(a, static_cast<Eigen::Index>(x)) < sim.distances(a, static_cast<Eigen::Index>(y));
  });
  return sim;
}

SimilarityMatrix SimilarityMatrix::sorted() const {
  SimilarityMatrix out;
  const auto n = static_cast<Eigen::Index>(anchor_order.size());
  out.distances.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.concept_ids.push_back(concept_ids[anchor_order[static_cast<std::size_t>(i)]]);
    for (Eigen::Index j = 0; j < n; ++j) {
      out.distances(i, j) = distances(static_cast<Eigen::Index>(anchor_order[static_cast<std::size_t>(i)]),
                                      static_cast<Eigen::Index>(anchor_order[static_cast<std::size_t>(j)]));
    }
  }
  out.anchor_order.resize(anchor_order.size());
  std::iota(out.anchor_order.begin(), out.anchor_order.end(), std::size_t{0});
  out.anchor = 0;
  return out;
}

ConceptSubspace reduce_to_1d(const ConceptSubspace& subspace, const Eigen::MatrixXd& members) {
  if (subspace.intrinsic_dim() < 1) throw ValidationError("reduce_to_1d: empty basis");
  if (members.rows() != subspace.feature_dim()) {
    throw ValidationError("reduce_to_1d: member dimension does not match the concept");
  }
  ConceptSubspace out = subspace;
  out.basis = subspace.basis.leftCols(1);
  out.threshold_angle = threshold_over(members, out.basis);
  out.member_count = static_cast<std::size_t>(members.cols());
  return out;
}

void save_concept(const ConceptSubspace& subspace, const std::filesystem::path& dir) {
  // NPY is row-major; copy into an F x d row-major buffer.
  const auto f = static_cast<std::size_t>(subspace.feature_dim());
  const auto d = static_cast<std::size_t>(subspace.intrinsic_dim());
  std::vector<double> buf(f * d);
  for (std::size_t r = 0; r < f; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      buf[r * d + c] = subspace.basis(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    }
  }
  const std::vector<std::size_t> shape{f, d};
  npy::write_f64(dir / (subspace.concept_id + ".npy"), shape, buf);
  write_json(dir / (subspace.concept_id + ".json"),
             {{"concept_id", subspace.concept_id},
              {"intrinsic_dim", d},
              {"feature_dim", f},
              {"threshold_angle", subspace.threshold_angle},
              {"member_count", subspace.member_count},
              {"spectrum", subspace.spectrum},
              {"source", subspace.source.to_json()}});
}

ConceptSubspace load_concept(const std::filesystem::path& dir, const std::string& concept_id) {
  const auto basis_path = dir / (concept_id + ".npy");
  const auto side_path = dir / (concept_id + ".json");
  if (!std::filesystem::exists(basis_path) || !std::filesystem::exists(side_path)) {
    throw MissingArtifactError("concept '" + concept_id + "' not found in " + dir.string());
  }
  const npy::Array arr = npy::read(basis_path);
  if (arr.shape.size() != 2) throw ValidationError("concept basis must be 2-D: " + basis_path.string());
  const std::vector<double> buf = npy::as_f64(arr);
  ConceptSubspace c;
  c.basis.resize(static_cast<Eigen::Index>(arr.shape[0]), static_cast<Eigen::Index>(arr.shape[1]));
  for (std::size_t r = 0; r < arr.shape[0]; ++r) {
    for (std::size_t k = 0; k < arr.shape[1]; ++k) {
      c.basis(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = buf[r * arr.shape[1] + k];
    }
  }
  const nlohmann::json side = read_json(side_path);
  try {
    c.concept_id = side.at("concept_id").get<std::string>();
    c.threshold_angle = side.at("threshold_angle").get<double>();
    c.member_count = side.at("member_count").get<std::size_t>();
    c.spectrum = side.value("spectrum", std::vector<double>{});
    c.source = ConceptProvenance::from_json(side.value("source", nlohmann::json::object()));
    if (side.at("intrinsic_dim").get<std::size_t>() != arr.shape[1]) {
      throw ValidationError("intrinsic_dim disagrees with basis shape for " + concept_id);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("concept sidecar " + side_path.string() + ": " + e.what());
  }
  return c;
}

void save_concept_bank(const std::vector<ConceptSubspace>& bank, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> ids;
  for (const auto& c : bank) {
    save_concept(c, dir);
    ids.push_back(c.concept_id);
  }
  write_json(dir / "bank.json", {{"concept_ids", ids}});
}

std::vector<ConceptSubspace> load_concept_bank(const std::filesystem::path& dir) {
  const auto index = dir / "bank.json";
  if (!std::filesystem::exists(index)) {
    throw MissingArtifactError("concept bank index not found: " + index.string());
  }
  const nlohmann::json j = read_json(index);
  std::vector<ConceptSubspace> bank;
  for (const auto& id : j.at("concept_ids")) bank.push_back(load_concept(dir, id.get<std::string>()));
  return bank;
}

void write_similarity_csv(const SimilarityMatrix& sim, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "concept_id";
  for (const auto& id : sim.concept_ids) out << ',' << id;
  out << '\n';
  char buf[64];
  for (Eigen::Index i = 0; i < sim.distances.rows(); ++i) {
    out << sim.concept_ids[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < sim.distances.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", sim.distances(i, j));
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace ssccd
