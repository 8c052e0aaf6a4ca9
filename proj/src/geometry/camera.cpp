#include "verse3d/geometry/camera.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "verse3d/core/errors.hpp"

namespace verse3d {

void PerspectiveCamera::validate() const {
  if (!position.allFinite()) throw DomainError("camera position must be finite");
  const double n = orientation.coeffs().norm();
  if (!std::isfinite(n) || std::abs(n - 1.0) > 1e-9) {
    throw DomainError("camera quaternion must be unit norm (got norm " + std::to_string(n) + ")");
  }
  if (!(near_plane > 0.0) || !(near_plane < far_plane)) {
    throw DomainError("camera requires 0 < near < far");
  }
  if (!(fov_x > 0.0) || !(fov_x < std::numbers::pi)) {
    throw DomainError("camera fov_x must lie in (0, pi)");
  }
  if (width < 1 || height < 1) throw DomainError("camera dimensions must be positive");
}

double PerspectiveCamera::focal() const { return 0.5 * width / std::tan(0.5 * fov_x); }

Eigen::Vector3d PerspectiveCamera::ray_direction(double px, double py) const {
  const double f = focal();
  const Eigen::Vector3d local((px - cx()) / f, -(py - cy()) / f, 1.0);
  return (camera_to_world() * local).normalized();
}

bool PerspectiveCamera::project(const Eigen::Vector3d& world, Eigen::Vector2d& pixel,
                                double& depth) const {
  const Eigen::Vector3d t = world_to_camera() * (world - position);
  depth = t.z();
  if (depth <= 0.0) return false;
  const double f = focal();
  pixel = Eigen::Vector2d(cx() + f * t.x() / t.z(), cy() - f * t.y() / t.z());
  return true;
}

Eigen::Quaterniond look_rotation(const Eigen::Vector3d& forward, const Eigen::Vector3d& up) {
  const Eigen::Vector3d z = forward.normalized();
  Eigen::Vector3d hint = up.normalized();
  if (std::abs(z.dot(hint)) > 1.0 - 1e-9) hint = Eigen::Vector3d::UnitZ();
  if (std::abs(z.dot(hint)) > 1.0 - 1e-9) hint = Eigen::Vector3d::UnitX();
  const Eigen::Vector3d x = hint.cross(z).normalized();
  const Eigen::Vector3d y = z.cross(x);
  Eigen::Matrix3d r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  Eigen::Quaterniond q(r);
  q.normalize();
  return q;
}

Eigen::Quaterniond yaw_pitch_rotation(double yaw, double pitch) {
  // Pitch about camera +x tilts +z toward +y when negative, so negate for "up".
  Eigen::Quaterniond q = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitY()) *
                         Eigen::AngleAxisd(-pitch, Eigen::Vector3d::UnitX());
  q.normalize();
  return q;
}

}  // namespace verse3d
