#include "verse3d/splat/scene_io.hpp"

#include <string>

#include <nlohmann/json.hpp>

#include "verse3d/core/errors.hpp"
#include "verse3d/core/image_io.hpp"

namespace verse3d {

namespace {
constexpr const char* kSceneFormat = "verse3d-splat-1";
}

std::filesystem::path scene_sidecar_path(const std::filesystem::path& ply_path) {
  std::filesystem::path p = ply_path;
  return p.replace_extension(".json");
}

PlyTable scene_to_ply(const SplatScene& scene) {
  PlyTable t;
  for (const char* n : {"x", "y", "z", "alpha_logit", "s_log_0", "s_log_1", "s_log_2", "q_0", "q_1",
                        "q_2", "q_3"}) {
    t.add_property(n, PlyType::kFloat64);
  }
  const int nsh = 3 * sh_coeff_count(scene.sh_degree);
  for (int i = 0; i < nsh; ++i) t.add_property("sh_" + std::to_string(i), PlyType::kFloat64);
  t.values.reserve(scene.gaussians.size() * t.columns());
  for (const Gaussian3D& g : scene.gaussians) {
    for (int k = 0; k < 3; ++k) t.values.push_back(g.position[k]);
    t.values.push_back(g.opacity_logit);
    for (int k = 0; k < 3; ++k) t.values.push_back(g.log_scale[k]);
    for (int k = 0; k < 4; ++k) t.values.push_back(g.rotation[k]);
    for (int i = 0; i < nsh; ++i) t.values.push_back(g.sh[i]);
  }
  return t;
}

SplatScene scene_from_ply(const PlyTable& t, int sh_degree, const Eigen::Vector3d& background) {
  SplatScene scene;
  scene.sh_degree = sh_degree;
  scene.background = background;
  const std::size_t base = t.column("x");
  const std::size_t first_sh = t.column("sh_0");
  const int nsh = 3 * sh_coeff_count(sh_degree);
  t.column("sh_" + std::to_string(nsh - 1));
  if (first_sh != base + 11 || t.column("q_3") != base + 10) {
    throw ParseError("scene PLY: unexpected property order");
  }
  scene.gaussians.resize(t.rows());
  for (std::size_t r = 0; r < t.rows(); ++r) {
    Gaussian3D& g = scene.gaussians[r];
    for (int k = 0; k < 3; ++k) g.position[k] = t.at(r, base + k);
    g.opacity_logit = t.at(r, base + 3);
    for (int k = 0; k < 3; ++k) g.log_scale[k] = t.at(r, base + 4 + k);
    for (int k = 0; k < 4; ++k) g.rotation[k] = t.at(r, base + 7 + k);
    for (int i = 0; i < nsh; ++i) g.sh[i] = t.at(r, first_sh + i);
  }
  scene.validate();
  return scene;
}

void save_scene(const std::filesystem::path& ply_path, const SplatScene& scene) {
  scene.validate();
  write_ply(ply_path, scene_to_ply(scene));
  nlohmann::ordered_json meta;
  meta["format"] = kSceneFormat;
  meta["sh_degree"] = scene.sh_degree;
  meta["background"] = {scene.background[0], scene.background[1], scene.background[2]};
  meta["count"] = scene.gaussians.size();
  write_file(scene_sidecar_path(ply_path), meta.dump(2) + "\n");
}

SplatScene load_scene(const std::filesystem::path& ply_path) {
  const std::string text = read_file(scene_sidecar_path(ply_path));
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(text);
    if (meta.at("format").get<std::string>() != kSceneFormat) {
      throw ParseError("scene sidecar: unknown format");
    }
    const int degree = meta.at("sh_degree").get<int>();
    const auto bg = meta.at("background").get<std::vector<double>>();
    if (bg.size() != 3 || degree < 0 || degree > kMaxShDegree) {
      throw ParseError("scene sidecar: bad sh_degree or background");
    }
    SplatScene scene = scene_from_ply(read_ply(ply_path), degree, {bg[0], bg[1], bg[2]});
    if (scene.gaussians.size() != meta.at("count").get<std::size_t>()) {
      throw ParseError("scene sidecar: count does not match PLY");
    }
    return scene;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("scene sidecar: ") + e.what());
  }
}

}  // namespace verse3d
