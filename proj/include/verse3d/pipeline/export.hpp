#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

namespace verse3d {

inline constexpr const char* kBundleFormat = "verse3d-bundle-1";

struct ExportedBundle {
  std::filesystem::path ply;       // <out>/scene.ply
  std::filesystem::path metadata;  // <out>/metadata.json
  nlohmann::json metadata_json;
};

/// Viewer bundle: the scene PLY (with its sidecar) plus metadata.json holding
/// the scene metadata, the PLY property layout and the PLY's SHA-256.
/// `scene_dir` is a run directory or any directory with scene.ply.
ExportedBundle export_bundle(const std::filesystem::path& scene_dir, const std::filesystem::path& out_dir);

}  // namespace verse3d
