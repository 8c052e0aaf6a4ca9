#include "verse3d/pipeline/render_request.hpp"

#include <cmath>
#include <set>

#include "verse3d/core/image_io.hpp"
#include "verse3d/splat/render.hpp"

namespace verse3d {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& path, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ValidationError(path, "expected an object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw ValidationError(path + "." + k, "unknown field");
  }
}

std::vector<double> numbers(const json& j, const std::string& path, std::size_t n) {
  if (!j.is_array() || j.size() != n) {
    throw ValidationError(path, "expected an array of " + std::to_string(n) + " numbers");
  }
  std::vector<double> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (!j[i].is_number() || !std::isfinite(j[i].get<double>())) {
      throw ValidationError(path + "[" + std::to_string(i) + "]", "expected a finite number");
    }
    out.push_back(j[i].get<double>());
  }
  return out;
}

double number(const json& j, const std::string& path) {
  if (!j.is_number() || !std::isfinite(j.get<double>())) {
    throw ValidationError(path, "expected a finite number");
  }
  return j.get<double>();
}

int integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ValidationError(path, "expected an integer");
  const auto v = j.get<std::int64_t>();
  if (v < 1 || v > 1 << 20) throw ValidationError(path, "must be a positive pixel count");
  return static_cast<int>(v);
}

}  // namespace

json camera_to_json(const PerspectiveCamera& cam) {
  const auto& q = cam.orientation;
  return {{"position", {cam.position.x(), cam.position.y(), cam.position.z()}},
          {"orientation", {q.w(), q.x(), q.y(), q.z()}},
          {"fov_x", cam.fov_x},
          {"width", cam.width},
          {"height", cam.height},
          {"near", cam.near_plane},
          {"far", cam.far_plane}};
}

PerspectiveCamera camera_from_json(const json& j, const std::string& path) {
  check_keys(j, path, {"position", "orientation", "fov_x", "width", "height", "near", "far"});
  for (const char* required : {"position", "orientation", "fov_x", "width", "height"}) {
    if (!j.contains(required)) throw ValidationError(path + "." + required, "required");
  }
  PerspectiveCamera cam;
  const auto p = numbers(j["position"], path + ".position", 3);
  cam.position = {p[0], p[1], p[2]};
  const auto q = numbers(j["orientation"], path + ".orientation", 4);
  const double norm = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
  if (!(std::abs(norm - 1.0) <= kQuaternionNormTolerance)) {
    throw ValidationError(path + ".orientation",
                          "quaternion [w, x, y, z] must have unit norm (got " + std::to_string(norm) + ")");
  }
  cam.orientation = Eigen::Quaterniond(q[0], q[1], q[2], q[3]);
  cam.fov_x = number(j["fov_x"], path + ".fov_x");
  cam.width = integer(j["width"], path + ".width");
  cam.height = integer(j["height"], path + ".height");
  if (j.contains("near")) cam.near_plane = number(j["near"], path + ".near");
  if (j.contains("far")) cam.far_plane = number(j["far"], path + ".far");
  try {
    cam.validate();
  } catch (const DomainError& e) {
    throw ValidationError(path, e.what());
  }
  return cam;
}

json RenderRequest::to_json() const {
  return {{"scene", scene}, {"camera", camera_to_json(camera)}, {"enhance", enhance}};
}

RenderRequest RenderRequest::from_json(const json& j, int max_dim) {
  check_keys(j, "request", {"scene", "camera", "enhance"});
  RenderRequest r;
  if (!j.contains("scene") || !j["scene"].is_string() || j["scene"].get<std::string>().empty()) {
    throw ValidationError("scene", "expected a non-empty string");
  }
  r.scene = j["scene"].get<std::string>();
  if (!j.contains("camera")) throw ValidationError("camera", "required");
  r.camera = camera_from_json(j["camera"], "camera");
  if (r.camera.width > max_dim) {
    throw ValidationError("camera.width", "exceeds the maximum of " + std::to_string(max_dim));
  }
  if (r.camera.height > max_dim) {
    throw ValidationError("camera.height", "exceeds the maximum of " + std::to_string(max_dim));
  }
  if (j.contains("enhance")) {
    if (!j["enhance"].is_boolean()) throw ValidationError("enhance", "expected a boolean");
    r.enhance = j["enhance"].get<bool>();
  }
  return r;
}

std::string render_png(const SplatScene& scene, const PerspectiveCamera& cam) {
  return encode_png(clamp01(render(scene, cam).rgb));
}

}  // namespace verse3d
