#pragma once

#include <Eigen/Core>

#include "verse3d/pointcloud/pointcloud.hpp"
#include "verse3d/splat/gaussian.hpp"

namespace verse3d {

struct InitOptions {
  int sh_degree = 2;
  int k_neighbors = 3;
  double initial_opacity = 0.1;
  /// Scale used when a point has no neighbors (single-point cloud).
  double fallback_scale = 0.01;
  /// Floor on the neighbor distance so duplicate points keep a finite log-scale.
  double min_distance = 1e-7;
  Eigen::Vector3d background = Eigen::Vector3d::Zero();
};

/// One isotropic gaussian per point: scale = mean distance to the k nearest
/// other points, DC color from the point color, identity rotation.
SplatScene init_from_pointcloud(const PointCloud& cloud, const InitOptions& opts = {});

}  // namespace verse3d
