#include "verse3d/iqa/niqe.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include "verse3d/core/errors.hpp"
#include "verse3d/core/image_io.hpp"

namespace verse3d {

namespace {

constexpr const char* kNiqeFormat = "verse3d-niqe-1";

struct Mvg {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

Mvg sample_mvg(const std::vector<Eigen::VectorXd>& features) {
  if (features.empty()) throw DegenerateInputError("niqe: no usable feature vectors");
  const Eigen::Index d = features[0].size();
  Mvg m{Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Zero(d, d)};
  for (const auto& f : features) {
    if (f.size() != d) throw DomainError("niqe: feature vectors differ in length");
    m.mean += f;
  }
  m.mean /= static_cast<double>(features.size());
  if (features.size() < 2) return m;
  for (const auto& f : features) {
    const Eigen::VectorXd c = f - m.mean;
    m.cov.noalias() += c * c.transpose();
  }
  m.cov /= static_cast<double>(features.size() - 1);
  return m;
}

}  // namespace

void NiqeModel::validate() const {
  if (mean.size() == 0 || covariance.rows() != mean.size() || covariance.cols() != mean.size()) {
    throw DomainError("niqe model: mean/covariance dimensions disagree");
  }
  if (!mean.allFinite() || !covariance.allFinite()) throw DomainError("niqe model: non-finite entries");
  if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-9) {
    throw DomainError("niqe model: covariance is not symmetric");
  }
  if (patch_size < 4 || patch_size % 2 != 0) throw DomainError("niqe model: patch_size must be even and >= 4");
  if (!(sharpness_fraction >= 0.0 && sharpness_fraction <= 1.0)) {
    throw DomainError("niqe model: sharpness_fraction must lie in [0, 1]");
  }
}

PatchFeatures niqe_patch_features(const ImageBuffer& image, int patch_size) {
  if (patch_size < 4 || patch_size % 2 != 0) throw DomainError("niqe: patch_size must be even and >= 4");
  const ImageBuffer gray = to_gray(image);
  if (gray.width() < patch_size || gray.height() < patch_size) {
    throw DomainError("niqe: image " + std::to_string(gray.width()) + "x" + std::to_string(gray.height()) +
                      " is smaller than one " + std::to_string(patch_size) + " px patch");
  }
  const int nx = gray.width() / patch_size, ny = gray.height() / patch_size;
  const ImageBuffer cropped = crop(gray, 0, 0, nx * patch_size, ny * patch_size);
  const MscnResult full = mscn_full(cropped);
  const ImageBuffer half = mscn(half_scale(cropped));
  const int hp = patch_size / 2;
  PatchFeatures out;
  for (int py = 0; py < ny; ++py) {
    for (int px = 0; px < nx; ++px) {
      Eigen::VectorXd f(kNiqeFeatureCount);
      try {
        const ScaleFeatures a = nss_block_features(full.coefficients, px * patch_size, py * patch_size,
                                                   patch_size, patch_size);
        const ScaleFeatures b = nss_block_features(half, px * hp, py * hp, hp, hp);
        for (int k = 0; k < kNssFeaturesPerScale; ++k) {
          f[k] = a[k];
          f[kNssFeaturesPerScale + k] = b[k];
        }
      } catch (const DegenerateInputError&) {
        continue;
      }
      double sharp = 0.0;
      for (int y = py * patch_size; y < (py + 1) * patch_size; ++y) {
        for (int x = px * patch_size; x < (px + 1) * patch_size; ++x) sharp += full.local_sigma.at(x, y);
      }
      out.features.push_back(std::move(f));
      out.sharpness.push_back(sharp / (static_cast<double>(patch_size) * patch_size));
    }
  }
  return out;
}

std::vector<Eigen::VectorXd> sharpest_patches(const PatchFeatures& pf, double fraction) {
  if (pf.features.empty()) return {};
  const double peak = *std::max_element(pf.sharpness.begin(), pf.sharpness.end());
  std::vector<Eigen::VectorXd> out;
  for (std::size_t i = 0; i < pf.features.size(); ++i) {
    if (pf.sharpness[i] >= fraction * peak) out.push_back(pf.features[i]);
  }
  return out;
}

Eigen::VectorXd niqe_features(const ImageBuffer& image, int patch_size, double sharpness_fraction) {
  const auto selected = sharpest_patches(niqe_patch_features(image, patch_size), sharpness_fraction);
  return sample_mvg(selected).mean;
}

double niqe_distance(const Eigen::VectorXd& m1, const Eigen::MatrixXd& s1, const Eigen::VectorXd& m2,
                     const Eigen::MatrixXd& s2) {
  if (m1.size() != m2.size() || s1.rows() != m1.size() || s2.rows() != m1.size() ||
      s1.cols() != m1.size() || s2.cols() != m1.size()) {
    throw DomainError("niqe_distance: dimension mismatch");
  }
  const Eigen::MatrixXd pooled = 0.5 * (s1 + s2);
  const Eigen::LLT<Eigen::MatrixXd> llt(pooled);
  if (llt.info() != Eigen::Success) {
    throw DegenerateInputError("niqe_distance: pooled covariance is not positive definite");
  }
  const Eigen::VectorXd d = m1 - m2;
  return std::sqrt(std::max(0.0, d.dot(llt.solve(d))));
}

double niqe_score_from_features(const std::vector<Eigen::VectorXd>& features, const NiqeModel& model) {
  model.validate();
  const Mvg m = sample_mvg(features);
  return niqe_distance(model.mean, model.covariance, m.mean, m.cov);
}

double niqe_score(const ImageBuffer& image, const NiqeModel& model) {
  model.validate();
  return niqe_score_from_features(niqe_patch_features(image, model.patch_size).features, model);
}

NiqeModel fit_niqe_model_from_features(const std::vector<Eigen::VectorXd>& features) {
  if (features.empty()) throw DegenerateInputError("fit_niqe_model: no feature vectors");
  const std::size_t dim = static_cast<std::size_t>(features[0].size());
  if (features.size() < dim + 1) {
    throw DegenerateInputError("fit_niqe_model: " + std::to_string(features.size()) +
                               " feature vectors, need at least " + std::to_string(dim + 1));
  }
  const Mvg m = sample_mvg(features);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m.cov, Eigen::EigenvaluesOnly);
  const double top = eig.eigenvalues().maxCoeff();
  if (!(top > 0.0) || eig.eigenvalues().minCoeff() <= 1e-12 * top) {
    throw DegenerateInputError("fit_niqe_model: sample covariance is singular");
  }
  NiqeModel model;
  model.mean = m.mean;
  model.covariance = m.cov + kNiqeRegularization * Eigen::MatrixXd::Identity(m.cov.rows(), m.cov.cols());
  return model;
}

NiqeModel fit_niqe_model(const std::vector<ImageBuffer>& pristine, int patch_size, double sharpness_fraction) {
  std::vector<Eigen::VectorXd> all;
  for (const ImageBuffer& img : pristine) {
    auto sel = sharpest_patches(niqe_patch_features(img, patch_size), sharpness_fraction);
    all.insert(all.end(), sel.begin(), sel.end());
  }
  NiqeModel model = fit_niqe_model_from_features(all);
  model.patch_size = patch_size;
  model.sharpness_fraction = sharpness_fraction;
  return model;
}

void save_niqe_model(const std::filesystem::path& path, const NiqeModel& model) {
  model.validate();
  nlohmann::json j;
  j["format"] = kNiqeFormat;
  j["patch_size"] = model.patch_size;
  j["sharpness_fraction"] = model.sharpness_fraction;
  j["mean"] = std::vector<double>(model.mean.data(), model.mean.data() + model.mean.size());
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < model.covariance.rows(); ++r) {
    std::vector<double> row(model.covariance.cols());
    for (Eigen::Index c = 0; c < model.covariance.cols(); ++c) row[c] = model.covariance(r, c);
    rows.push_back(row);
  }
  j["covariance"] = rows;
  write_file(path, j.dump(1));
}

NiqeModel load_niqe_model(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  NiqeModel model;
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    if (j.at("format").get<std::string>() != kNiqeFormat) throw ParseError("niqe model: unknown format");
    model.patch_size = j.at("patch_size").get<int>();
    model.sharpness_fraction = j.at("sharpness_fraction").get<double>();
    const auto mean = j.at("mean").get<std::vector<double>>();
    const auto rows = j.at("covariance").get<std::vector<std::vector<double>>>();
    model.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    model.covariance.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(mean.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != mean.size()) throw ParseError("niqe model: ragged covariance");
      for (std::size_t c = 0; c < mean.size(); ++c) model.covariance(r, c) = rows[r][c];
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("niqe model: ") + e.what());
  }
  try {
    model.validate();
  } catch (const DomainError& e) {
    throw ParseError(e.what());
  }
  return model;
}

}  // namespace verse3d
