#pragma once

#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "verse3d/core/image.hpp"
#include "verse3d/iqa/nss.hpp"

namespace verse3d {

inline constexpr int kNiqeFeatureCount = 2 * kNssFeaturesPerScale;
inline constexpr int kNiqePatchSize = 96;
inline constexpr double kNiqeSharpnessFraction = 0.75;
inline constexpr double kNiqeRegularization = 1e-6;

/// Multivariate Gaussian of pristine patch features.
struct NiqeModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  int patch_size = kNiqePatchSize;
  double sharpness_fraction = kNiqeSharpnessFraction;

  /// Throws DomainError: matching dims, finite, symmetric within 1e-9, even
  /// patch size >= 4, fraction in [0, 1].
  void validate() const;
};

/// Per-patch features of an image: the image is cropped to a multiple of
/// patch_size, features come from patch_size blocks at full scale and
/// patch_size/2 blocks at half scale. Sharpness is the mean local deviation
/// over the full-scale block. Patches whose fit is degenerate (e.g. flat)
/// are dropped.
struct PatchFeatures {
  std::vector<Eigen::VectorXd> features;
  std::vector<double> sharpness;
};
PatchFeatures niqe_patch_features(const ImageBuffer& image, int patch_size = kNiqePatchSize);

/// Patches with sharpness >= fraction * max sharpness.
std::vector<Eigen::VectorXd> sharpest_patches(const PatchFeatures& pf, double fraction);

/// Mean feature vector over the sharpest patches. Throws DomainError when the
/// image is smaller than one patch, DegenerateInputError when no patch is
/// usable.
Eigen::VectorXd niqe_features(const ImageBuffer& image, int patch_size = kNiqePatchSize,
                              double sharpness_fraction = kNiqeSharpnessFraction);

/// sqrt(d^T ((S1 + S2) / 2)^-1 d), d = m1 - m2. Throws DegenerateInputError
/// when the pooled covariance is not positive definite.
double niqe_distance(const Eigen::VectorXd& m1, const Eigen::MatrixXd& s1, const Eigen::VectorXd& m2,
                     const Eigen::MatrixXd& s2);

/// Distance between the model and the MVG of the given feature set (sample
/// mean, unbiased covariance; zero covariance for a single vector).
double niqe_score_from_features(const std::vector<Eigen::VectorXd>& features, const NiqeModel& model);

/// Score of an image using all of its usable patches. Lower is more natural.
double niqe_score(const ImageBuffer& image, const NiqeModel& model);

/// Sample mean and covariance + kNiqeRegularization * I. Throws
/// DegenerateInputError with fewer than dim + 1 vectors or when the sample
/// covariance is singular.
NiqeModel fit_niqe_model_from_features(const std::vector<Eigen::VectorXd>& features);

/// Model from the sharpest patches of every image.
NiqeModel fit_niqe_model(const std::vector<ImageBuffer>& pristine, int patch_size = kNiqePatchSize,
                         double sharpness_fraction = kNiqeSharpnessFraction);

/// JSON: {"format": "verse3d-niqe-1", patch_size, sharpness_fraction, mean,
/// covariance (row-major rows)}.
void save_niqe_model(const std::filesystem::path& path, const NiqeModel& model);
NiqeModel load_niqe_model(const std::filesystem::path& path);

}  // namespace verse3d
