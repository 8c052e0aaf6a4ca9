#include "verse3d/pipeline/export.hpp"

#include "verse3d/core/errors.hpp"
#include "verse3d/core/hash.hpp"
#include "verse3d/core/image_io.hpp"
#include "verse3d/pipeline/service.hpp"
#include "verse3d/splat/scene_io.hpp"

namespace verse3d {

namespace fs = std::filesystem;
using nlohmann::json;

ExportedBundle export_bundle(const fs::path& scene_dir, const fs::path& out_dir) {
  const SceneEntry e = load_scene_entry(scene_dir, fs::weakly_canonical(scene_dir).filename().string());
  fs::create_directories(out_dir);
  ExportedBundle b;
  b.ply = out_dir / "scene.ply";
  b.metadata = out_dir / "metadata.json";
  fs::copy_file(e.ply, b.ply, fs::copy_options::overwrite_existing);
  fs::copy_file(scene_sidecar_path(e.ply), scene_sidecar_path(b.ply), fs::copy_options::overwrite_existing);

  const PlyTable table = scene_to_ply(e.scene);
  json j = e.metadata;
  j["format"] = kBundleFormat;
  j["ply"] = b.ply.filename().string();
  j["ply_sha256"] = sha256_file(b.ply.string());
  j["ply_layout"] = {{"encoding", "binary_little_endian"}, {"element", "vertex"}, {"type", "double"},
                     {"properties", table.names}};
  write_file(b.metadata, j.dump(2) + "\n");
  b.metadata_json = std::move(j);
  return b;
}

}  // namespace verse3d
