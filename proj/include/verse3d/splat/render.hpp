#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "verse3d/core/image.hpp"
#include "verse3d/geometry/camera.hpp"
#include "verse3d/splat/gaussian.hpp"

namespace verse3d {

inline constexpr int kTileSize = 16;
/// Added to the diagonal of every screen-space covariance, px^2.
inline constexpr double kCovarianceFloor = 0.3;
/// Gaussians contribute where d^T cov2d^-1 d <= this (a 3-sigma ellipse).
inline constexpr double kCutoffMahalanobisSq = 9.0;
inline constexpr double kMaxAlpha = 0.999;
/// View-space tangent clamp applied before forming the projection Jacobian.
inline constexpr double kJacobianTanLimit = 1.3;

/// Camera quantities in the renderer's scalar type.
template <typename T>
struct CameraFrame {
  Eigen::Matrix<T, 3, 3> world_to_camera;
  Eigen::Matrix<T, 3, 1> position;
  T focal, cx, cy, near_plane, lim_x, lim_y;
  int width, height, tiles_x, tiles_y;

  /// Validates the camera (DomainError) and converts.
  static CameraFrame make(const PerspectiveCamera& cam);
};

template <typename T>
struct ProjectedGaussian {
  T mean_x, mean_y;
  T cov_xx, cov_xy, cov_yy;        // regularized
  T conic_xx, conic_xy, conic_yy;  // inverse of cov
  T depth;
  T color[3];
  T opacity;
  int tile_x0, tile_y0, tile_x1, tile_y1;  // inclusive tile range
};

/// Screen-space footprint of one gaussian, or nullopt when culled (camera
/// z <= near, or the 3-sigma box misses the image).
template <typename T>
std::optional<ProjectedGaussian<T>> project_gaussian(const Gaussian3D& g, int sh_degree,
                                                     const CameraFrame<T>& cam);

/// Gaussians sorted front to back by (depth, index) and binned into tiles.
/// `order` holds gaussian indices; each tile lists positions into `order`.
template <typename T>
struct TileBins {
  std::vector<std::optional<ProjectedGaussian<T>>> projected;  // by gaussian index
  std::vector<std::uint32_t> order;
  std::vector<std::vector<std::uint32_t>> tiles;  // row-major, entries index `order`
};

template <typename T>
TileBins<T> bin_gaussians(const SplatScene& scene, const CameraFrame<T>& cam);

/// Front-to-back accumulator state for one pixel.
template <typename T>
struct PixelAccumulator {
  T color[3] = {0, 0, 0};
  T depth = 0;
  T transmittance = 1;
};

/// Alpha of projected gaussian p at pixel center (px, py); zero outside the
/// 3-sigma ellipse. Clamped to kMaxAlpha.
template <typename T>
T splat_alpha(const ProjectedGaussian<T>& p, T px, T py);

struct RenderResult {
  ImageBuffer rgb;    // 3 channels
  ImageBuffer depth;  // expected camera z of the visible mass, 0 where empty
  ImageBuffer alpha;  // 1 - final transmittance
};

/// Tiled renderer in scalar type T (float for production, double for
/// verification). Deterministic and independent of tile scheduling.
template <typename T>
RenderResult render_as(const SplatScene& scene, const PerspectiveCamera& cam);

/// Production renderer (32-bit).
RenderResult render(const SplatScene& scene, const PerspectiveCamera& cam);

struct CompositeEntry {
  Eigen::Vector3d color;
  double alpha = 0.0;
  double depth = 0.0;
};

struct CompositeResult {
  Eigen::Vector3d color;
  double weight_sum = 0.0;          // sum_i a_i T_i
  double final_transmittance = 1.0;
};

/// Eq. (1) accumulation over an already sorted front-to-back list. Throws
/// ContractViolation when depths decrease or an alpha leaves [0,1).
CompositeResult composite_pixel(std::span<const CompositeEntry> entries,
                                const Eigen::Vector3d& background);

}  // namespace verse3d
