#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace verse3d {

/// Pinhole camera with a world-from-camera rotation.
///
/// Camera frame: +x maps to image right, +y to image up, +z is the viewing
/// direction. With the identity orientation the camera looks along world +Z
/// with world +Y up, which matches the panorama convention so tangent views
/// are not mirrored relative to the equirectangular raster.
///
/// Pixel (i, j) has its center at (i + 0.5, j + 0.5); the principal point is
/// (width / 2, height / 2) and pixels are square.
struct PerspectiveCamera {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();
  double fov_x = 1.0;  // radians
  int width = 64;
  int height = 64;
  double near_plane = 0.01;
  double far_plane = 1000.0;

  /// Throws DomainError if any invariant is violated.
  void validate() const;

  double focal() const;  // pixels, same for both axes
  double cx() const { return 0.5 * width; }
  double cy() const { return 0.5 * height; }

  /// Rotation taking world vectors into the camera frame.
  Eigen::Matrix3d world_to_camera() const { return orientation.toRotationMatrix().transpose(); }
  Eigen::Matrix3d camera_to_world() const { return orientation.toRotationMatrix(); }

  /// Unit world-space direction through a continuous pixel position (pixel
  /// centers at +0.5).
  Eigen::Vector3d ray_direction(double px, double py) const;

  /// Image position of a world point; returns false when behind the camera.
  bool project(const Eigen::Vector3d& world, Eigen::Vector2d& pixel, double& depth) const;

  Eigen::Vector3d forward() const { return camera_to_world().col(2); }

  /// Exact comparison of every field.
  bool operator==(const PerspectiveCamera& o) const {
    return position == o.position && orientation.coeffs() == o.orientation.coeffs() &&
           fov_x == o.fov_x && width == o.width && height == o.height &&
           near_plane == o.near_plane && far_plane == o.far_plane;
  }
};

/// Orientation whose optical axis is `forward` and whose image-up is as close
/// to `up` as possible. Falls back to world +Z when the two are parallel.
Eigen::Quaterniond look_rotation(const Eigen::Vector3d& forward,
                                 const Eigen::Vector3d& up = Eigen::Vector3d::UnitY());

/// Orientation from yaw (about +Y, 0 looks along +Z, positive turns toward +X)
/// and pitch (positive looks up).
Eigen::Quaterniond yaw_pitch_rotation(double yaw, double pitch);

}  // namespace verse3d
