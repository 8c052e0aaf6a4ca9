#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "verse3d/core/image.hpp"
#include "verse3d/core/rng.hpp"
#include "verse3d/geometry/camera.hpp"

namespace verse3d {

struct PerturbationConfig {
  double base_range = 0.05;
  std::vector<double> lambdas{1.0, 2.0, 4.0};
  int views_per_stage = 0;
  std::uint64_t seed = 0;

  /// Throws ConfigError: base_range > 0, lambdas positive and strictly
  /// increasing, views_per_stage >= 0.
  void validate() const;
};

/// Offset with each component i.i.d. uniform on [-base_range * lambda,
/// base_range * lambda].
Eigen::Vector3d perturbation_offset(double lambda, Rng& rng, double base_range = 0.05);

/// Base camera translated by perturbation_offset; orientation and intrinsics
/// are unchanged.
PerspectiveCamera perturb_camera(const PerspectiveCamera& base, double lambda, Rng& rng,
                                 double base_range = 0.05);

inline constexpr int kTangentStage = 0;

struct TrainView {
  PerspectiveCamera camera;
  ImageBuffer target;
  int stage = kTangentStage;  // 0 for tangent views, k >= 1 for the k-th lambda
  double lambda = 0.0;

  bool operator==(const TrainView&) const = default;
};

/// Panorama seen from an arbitrary camera by forward-warping every panorama
/// pixel to its 3D point (depth along its ray) with a z-buffer and a footprint
/// splat. Pixels that receive no point fall back to the panorama sample along
/// their own ray.
ImageBuffer warp_panorama(const PanoImage& pano, const PanoImage& depth, const PerspectiveCamera& cam);

/// Tangent views with project_pano_to_view targets, then views_per_stage
/// perturbed cameras per lambda (in lambda order), cycling over the tangent
/// cameras, with forward-warped targets. `depth` is calibrated (world units)
/// and matches the panorama dimensions.
std::vector<TrainView> build_training_set(const PanoImage& pano, const PanoImage& depth,
                                          const std::vector<PerspectiveCamera>& tangents,
                                          const PerturbationConfig& cfg);

}  // namespace verse3d
