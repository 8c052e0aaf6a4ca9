#pragma once

#include <filesystem>

#include "verse3d/core/ply.hpp"
#include "verse3d/splat/gaussian.hpp"

namespace verse3d {

/// Scene file layout: a binary little-endian PLY with one vertex per gaussian
/// and double properties
///   x y z alpha_logit s_log_0..2 q_0..3 (w x y z) sh_0..sh_{3K-1}
/// (K = (sh_degree + 1)^2, band-major, RGB interleaved), plus a JSON sidecar
/// beside it (same stem, ".json") holding format, sh_degree, background, count.
std::filesystem::path scene_sidecar_path(const std::filesystem::path& ply_path);

PlyTable scene_to_ply(const SplatScene& scene);
SplatScene scene_from_ply(const PlyTable& table, int sh_degree, const Eigen::Vector3d& background);

void save_scene(const std::filesystem::path& ply_path, const SplatScene& scene);
/// Throws NotFoundError for missing files, ParseError for malformed ones.
SplatScene load_scene(const std::filesystem::path& ply_path);

}  // namespace verse3d
