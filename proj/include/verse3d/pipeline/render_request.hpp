#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "verse3d/core/errors.hpp"
#include "verse3d/geometry/camera.hpp"
#include "verse3d/splat/gaussian.hpp"

namespace verse3d {

/// A request field that failed validation; `field` is its JSON path.
class ValidationError : public DomainError {
 public:
  ValidationError(std::string field, const std::string& message)
      : DomainError(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Unit-norm tolerance on request quaternions. Accepted quaternions are used
/// exactly as sent.
inline constexpr double kQuaternionNormTolerance = 1e-6;

/// {"position": [x, y, z], "orientation": [w, x, y, z], "fov_x": radians,
///  "width", "height", "near", "far"}
nlohmann::json camera_to_json(const PerspectiveCamera& cam);
/// Strict: unknown keys, wrong types, a non-unit quaternion or an invalid
/// camera throw ValidationError naming the field under `path`.
PerspectiveCamera camera_from_json(const nlohmann::json& j, const std::string& path = "camera");

struct RenderRequest {
  std::string scene;
  PerspectiveCamera camera;
  bool enhance = false;

  nlohmann::json to_json() const;
  /// ValidationError on schema violations or dims above `max_dim`.
  static RenderRequest from_json(const nlohmann::json& j, int max_dim);
};

/// The 8-bit PNG of the production render. Training renders stored by the
/// pipeline and /render responses both come from here.
std::string render_png(const SplatScene& scene, const PerspectiveCamera& cam);

}  // namespace verse3d
