#include "verse3d/iqa/brisque.hpp"

#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "verse3d/core/errors.hpp"
#include "verse3d/core/image_io.hpp"
#include "verse3d/iqa/nss.hpp"

namespace verse3d {

namespace {

constexpr const char* kBrisqueFormat = "verse3d-brisque-svr-1";

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void BrisqueModel::validate() const {
  if (!(gamma > 0.0)) throw DomainError("brisque model: gamma must be > 0");
  const Eigen::Index d = feature_min.size();
  if (d == 0 || feature_max.size() != d || support_vectors.cols() != d ||
      support_vectors.rows() != coefficients.size() || coefficients.size() == 0) {
    throw DomainError("brisque model: inconsistent sizes");
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    if (!(feature_min[i] < feature_max[i])) {
      throw DomainError("brisque model: feature " + std::to_string(i) + " has min >= max");
    }
  }
}

BrisqueModel load_brisque_model(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  BrisqueModel m;
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    if (j.at("format").get<std::string>() != kBrisqueFormat) throw ParseError("brisque model: unknown format");
    if (j.at("kernel").get<std::string>() != "rbf") throw ParseError("brisque model: only rbf kernels are supported");
    m.gamma = j.at("gamma").get<double>();
    m.rho = j.at("rho").get<double>();
    m.feature_min = to_vector(j.at("feature_min").get<std::vector<double>>());
    m.feature_max = to_vector(j.at("feature_max").get<std::vector<double>>());
    m.coefficients = to_vector(j.at("coefficients").get<std::vector<double>>());
    const auto svs = j.at("support_vectors").get<std::vector<std::vector<double>>>();
    m.support_vectors.resize(static_cast<Eigen::Index>(svs.size()), m.feature_min.size());
    for (std::size_t r = 0; r < svs.size(); ++r) {
      if (static_cast<Eigen::Index>(svs[r].size()) != m.feature_min.size()) {
        throw ParseError("brisque model: support vector " + std::to_string(r) + " has the wrong length");
      }
      for (std::size_t c = 0; c < svs[r].size(); ++c) m.support_vectors(r, c) = svs[r][c];
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("brisque model: ") + e.what());
  }
  try {
    m.validate();
  } catch (const DomainError& e) {
    throw ParseError(e.what());
  }
  return m;
}

Eigen::VectorXd brisque_features(const ImageBuffer& image) {
  const ImageBuffer gray = to_gray(image);
  const ImageBuffer half = half_scale_cubic(gray);
  if (half.width() < 2 || half.height() < 2) throw DomainError("brisque: image too small");
  MscnConfig cfg;
  cfg.boundary = MscnBoundary::kZero;  // the convention the shipped regressor was trained with
  const ImageBuffer m1 = mscn(gray, cfg);
  const ImageBuffer m2 = mscn(half, cfg);
  const ScaleFeatures a = nss_block_features(m1, 0, 0, m1.width(), m1.height());
  const ScaleFeatures b = nss_block_features(m2, 0, 0, m2.width(), m2.height());
  Eigen::VectorXd f(kBrisqueFeatureCount);
  for (int k = 0; k < kNssFeaturesPerScale; ++k) {
    f[k] = a[k];
    f[kNssFeaturesPerScale + k] = b[k];
  }
  return f;
}

Eigen::VectorXd brisque_scale(const Eigen::VectorXd& x, const BrisqueModel& m) {
  if (x.size() != m.feature_min.size()) throw DomainError("brisque: feature length mismatch");
  Eigen::VectorXd out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    out[i] = -1.0 + 2.0 * (x[i] - m.feature_min[i]) / (m.feature_max[i] - m.feature_min[i]);
  }
  return out;
}

double brisque_score_from_features(const Eigen::VectorXd& features, const BrisqueModel& m) {
  const Eigen::VectorXd x = brisque_scale(features, m);
  double s = 0.0;
  for (Eigen::Index i = 0; i < m.support_vectors.rows(); ++i) {
    s += m.coefficients[i] * std::exp(-m.gamma * (m.support_vectors.row(i).transpose() - x).squaredNorm());
  }
  return s - m.rho;
}

double brisque_score(const ImageBuffer& image, const BrisqueModel& model) {
  model.validate();
  return brisque_score_from_features(brisque_features(image), model);
}

}  // namespace verse3d
