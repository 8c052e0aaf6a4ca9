#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "verse3d/core/image.hpp"

namespace verse3d {

struct PointCloud {
  std::vector<Eigen::Vector3d> positions;
  std::vector<Eigen::Vector3d> colors;  // RGB in [0,1]

  std::size_t count() const noexcept { return positions.size(); }
  /// Throws DomainError on size mismatch or non-finite coordinates.
  void validate() const;
};

enum class DepthMode { kAffineNormalize, kMetricPassthrough };

struct DepthCalibration {
  DepthMode mode = DepthMode::kAffineNormalize;
  double near_depth = 0.5;
  double far_depth = 50.0;

  void validate() const;
};

/// Affine mode maps [min, max] of the input linearly onto [near, far];
/// metric mode returns the input. A constant image in affine mode throws
/// DegenerateInputError.
PanoImage calibrate_depth(const PanoImage& depth, const DepthCalibration& calib);

/// One point per pixel in raster order: r(u, v) * pixel_to_ray(u, v), with r the
/// calibrated depth clamped below at `near`. Colors are copied from `rgb`.
PointCloud depth_pano_to_points(const PanoImage& rgb, const PanoImage& depth,
                                const DepthCalibration& calib);

/// Every stride-th point in raster order, starting with the first.
PointCloud subsample(const PointCloud& cloud, int stride);

/// Binary little-endian PLY: double x, y, z and float red, green, blue in [0,1].
void write_point_cloud(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud read_point_cloud(const std::filesystem::path& path);

}  // namespace verse3d
