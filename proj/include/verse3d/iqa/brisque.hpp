#pragma once

#include <filesystem>

#include <Eigen/Core>

#include "verse3d/core/image.hpp"

namespace verse3d {

inline constexpr int kBrisqueFeatureCount = 36;

/// RBF epsilon-SVR over min-max scaled features:
///   score = sum_i coef_i exp(-gamma |x - sv_i|^2) - rho.
struct BrisqueModel {
  double gamma = 0.0;
  double rho = 0.0;
  Eigen::VectorXd feature_min;
  Eigen::VectorXd feature_max;
  Eigen::VectorXd coefficients;
  Eigen::MatrixXd support_vectors;  // one row per vector

  /// Throws DomainError: gamma > 0, min < max per feature, consistent sizes.
  void validate() const;
};

/// JSON {"format": "verse3d-brisque-svr-1", kernel: "rbf", gamma, rho,
/// feature_min, feature_max, coefficients, support_vectors}. Throws
/// NotFoundError or ParseError.
BrisqueModel load_brisque_model(const std::filesystem::path& path);

/// 18 whole-image NSS features at full and half scale.
Eigen::VectorXd brisque_features(const ImageBuffer& image);

/// -1 + 2 (x - min) / (max - min) per feature.
Eigen::VectorXd brisque_scale(const Eigen::VectorXd& features, const BrisqueModel& model);

double brisque_score_from_features(const Eigen::VectorXd& features, const BrisqueModel& model);

/// Lower is better.
double brisque_score(const ImageBuffer& image, const BrisqueModel& model);

}  // namespace verse3d
