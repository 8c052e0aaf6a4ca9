#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "verse3d/backends/backends.hpp"
#include "verse3d/iqa/brisque.hpp"
#include "verse3d/iqa/niqe.hpp"
#include "verse3d/splat/gaussian.hpp"

namespace httplib {
class Server;
}

namespace verse3d {

/// One loaded scene. Entries are immutable once published.
struct SceneEntry {
  std::string id;
  std::filesystem::path dir;
  std::filesystem::path ply;
  std::filesystem::path manifest;  // empty when the scene has none
  SplatScene scene;
  nlohmann::json metadata;  // see scene_metadata
};

/// A scene directory holds optimize/scene.ply (a pipeline run) or scene.ply,
/// plus an optional manifest.json. Throws NotFoundError when neither exists.
SceneEntry load_scene_entry(const std::filesystem::path& dir, const std::string& id);

/// id, gaussians, sh_degree, background, bounds, initial_camera, and when a
/// manifest is present haiku {id, text} and prompt.
nlohmann::json scene_metadata(const SceneEntry& entry);

using SceneSnapshot = std::map<std::string, std::shared_ptr<const SceneEntry>>;

/// Scenes under a directory: the directory itself when it is a scene
/// directory, otherwise each scene subdirectory (id = its name). Unloadable
/// scenes are skipped with a warning.
SceneSnapshot scan_scenes(const std::filesystem::path& root);

/// Single-writer registry: refresh() builds a new snapshot and swaps it in;
/// readers keep whatever snapshot they grabbed.
class SceneRegistry {
 public:
  explicit SceneRegistry(std::filesystem::path root);
  std::shared_ptr<const SceneSnapshot> snapshot() const;
  std::shared_ptr<const SceneSnapshot> refresh();

 private:
  std::filesystem::path root_;
  mutable std::mutex mutex_;
  std::mutex refresh_mutex_;
  std::shared_ptr<const SceneSnapshot> current_;
};

struct ServiceOptions {
  int max_dim = 2048;
  std::shared_ptr<const EnhanceBackend> enhancer;  // null = the mock enhancer
  int enhance_scale = 2;
  std::filesystem::path niqe_model;     // empty = <data>/iqa/niqe_model.json
  std::filesystem::path brisque_model;  // empty = <data>/iqa/brisque_model.json
};

/// HTTP render service:
///   GET  /health
///   GET  /scenes                 {"scenes": [metadata...]}
///   POST /scenes/refresh         rescans the scenes directory
///   GET  /scenes/{id}/splat      scene PLY
///   GET  /scenes/{id}/manifest   pipeline manifest JSON
///   POST /render                 RenderRequest -> PNG
///   POST /evaluate-frame         RenderRequest -> {"niqe", "brisque", ...}
/// /render answers with X-Render-Time-Ms, X-Render-Pose (the parsed camera
/// re-serialized), X-Scene-Id and X-Enhanced headers. Errors are JSON
/// {"error": {"type", "message", "field"?}} with 400 for validation failures
/// and 404 for unknown scenes.
class RenderService {
 public:
  /// Throws NotFoundError when the directory holds no scene.
  RenderService(std::filesystem::path scenes_dir, ServiceOptions options = {});
  ~RenderService();
  RenderService(const RenderService&) = delete;
  RenderService& operator=(const RenderService&) = delete;

  /// Serves on a background thread; port 0 picks a free port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Serves on the calling thread until stop().
  void listen(const std::string& host, int port);
  void stop();

  int port() const noexcept { return port_; }
  std::string base_url() const;
  SceneRegistry& registry() { return registry_; }

 private:
  void install_routes();

  SceneRegistry registry_;
  ServiceOptions options_;
  NiqeModel niqe_;
  BrisqueModel brisque_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::string host_;
  int port_ = 0;
};

}  // namespace verse3d
