#include "verse3d/pipeline/service.hpp"

#include <chrono>
#include <cstdio>
#include <limits>

#include <spdlog/spdlog.h>

#include "verse3d/core/errors.hpp"
#include "verse3d/core/image_io.hpp"
#include "verse3d/backends/mock.hpp"
#include "verse3d/geometry/panorama.hpp"
#include "verse3d/pipeline/config.hpp"
#include "verse3d/pipeline/manifest.hpp"
#include "verse3d/pipeline/render_request.hpp"
#include "verse3d/splat/render.hpp"
#include "verse3d/splat/scene_io.hpp"

#include <httplib.h>

namespace verse3d {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scene_file_in(const fs::path& dir) {
  if (fs::exists(dir / "optimize" / "scene.ply")) return dir / "optimize" / "scene.ply";
  if (fs::exists(dir / "scene.ply")) return dir / "scene.ply";
  return {};
}

std::string scene_id_of(const fs::path& dir) {
  const fs::path p = fs::weakly_canonical(dir);
  return p.filename().string();
}

}  // namespace

SceneEntry load_scene_entry(const fs::path& dir, const std::string& id) {
  SceneEntry e;
  e.id = id;
  e.dir = dir;
  e.ply = scene_file_in(dir);
  if (e.ply.empty()) throw NotFoundError("no scene.ply under " + dir.string());
  if (fs::exists(dir / "manifest.json")) e.manifest = dir / "manifest.json";
  e.scene = load_scene(e.ply);
  e.metadata = scene_metadata(e);
  return e;
}

json scene_metadata(const SceneEntry& e) {
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;
  for (const auto& g : e.scene.gaussians) {
    lo = lo.cwiseMin(g.position);
    hi = hi.cwiseMax(g.position);
  }
  if (e.scene.gaussians.empty()) lo = hi = Eigen::Vector3d::Zero();
  const FaceFrame central = face_frame(kCentralFace);
  PerspectiveCamera start;
  start.orientation = look_rotation(central.forward, central.up);
  start.fov_x = 1.5707963267948966;
  start.width = 512;
  start.height = 512;
  json j{{"id", e.id},
         {"gaussians", e.scene.gaussians.size()},
         {"sh_degree", e.scene.sh_degree},
         {"background", {e.scene.background.x(), e.scene.background.y(), e.scene.background.z()}},
         {"bounds", {{"min", {lo.x(), lo.y(), lo.z()}}, {"max", {hi.x(), hi.y(), hi.z()}}}},
         {"initial_camera", camera_to_json(start)},
         {"has_manifest", !e.manifest.empty()}};
  if (!e.manifest.empty()) {
    try {
      const PipelineManifest m = PipelineManifest::load(e.manifest);
      j["haiku"] = {{"id", m.haiku_id}, {"text", m.haiku_text}};
      if (const StageRecord* parse = m.find("parse"); parse && parse->status == "done") {
        const json doc = json::parse(read_file(e.dir / parse->artifact("parse").path));
        j["prompt"] = doc.value("outpaint_prompt", "");
      }
    } catch (const std::exception& ex) {
      spdlog::warn("scene {}: unreadable manifest: {}", e.id, ex.what());
    }
  }
  return j;
}

SceneSnapshot scan_scenes(const fs::path& root) {
  SceneSnapshot snap;
  auto add = [&](const fs::path& dir, const std::string& id) {
    try {
      snap[id] = std::make_shared<const SceneEntry>(load_scene_entry(dir, id));
    } catch (const std::exception& ex) {
      spdlog::warn("skipping scene {}: {}", dir.string(), ex.what());
    }
  };
  if (!fs::is_directory(root)) throw NotFoundError("scenes directory not found: " + root.string());
  if (!scene_file_in(root).empty()) {
    add(root, scene_id_of(root));
    return snap;
  }
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && !scene_file_in(entry.path()).empty()) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  for (const auto& d : dirs) add(d, d.filename().string());
  return snap;
}

SceneRegistry::SceneRegistry(fs::path root) : root_(std::move(root)) { refresh(); }

std::shared_ptr<const SceneSnapshot> SceneRegistry::snapshot() const {
  std::lock_guard lock(mutex_);
  return current_;
}

std::shared_ptr<const SceneSnapshot> SceneRegistry::refresh() {
  std::lock_guard writer(refresh_mutex_);
  auto next = std::make_shared<const SceneSnapshot>(scan_scenes(root_));
  std::lock_guard lock(mutex_);
  current_ = next;
  return next;
}

namespace {

void reply_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& type, const std::string& message,
                 const std::string& field = {}) {
  json err{{"type", type}, {"message", message}};
  if (!field.empty()) err["field"] = field;
  reply_json(res, status, {{"error", err}});
}

// Parses and validates a RenderRequest, or writes the error response.
std::optional<RenderRequest> read_request(const httplib::Request& req, httplib::Response& res, int max_dim) {
  json body;
  try {
    body = json::parse(req.body);
  } catch (const json::parse_error& e) {
    reply_error(res, 400, "validation", std::string("body is not valid JSON: ") + e.what(), "request");
    return std::nullopt;
  }
  try {
    return RenderRequest::from_json(body, max_dim);
  } catch (const ValidationError& e) {
    reply_error(res, 400, "validation", e.what(), e.field());
    return std::nullopt;
  }
}

template <typename Fn>
auto guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const NotFoundError& e) {
      reply_error(res, 404, "not_found", e.what());
    } catch (const ValidationError& e) {
      reply_error(res, 400, "validation", e.what(), e.field());
    } catch (const std::exception& e) {
      reply_error(res, 500, "internal", e.what());
    }
  };
}

std::shared_ptr<const SceneEntry> lookup(const SceneSnapshot& snap, const std::string& id) {
  const auto it = snap.find(id);
  if (it == snap.end()) throw NotFoundError("unknown scene '" + id + "'");
  return it->second;
}

}  // namespace

RenderService::RenderService(fs::path scenes_dir, ServiceOptions options)
    : registry_(std::move(scenes_dir)), options_(std::move(options)) {
  if (registry_.snapshot()->empty()) throw NotFoundError("no scenes to serve");
  if (!options_.enhancer) options_.enhancer = std::make_shared<MockEnhance>();
  check_enhance_scale(options_.enhance_scale);
  niqe_ = load_niqe_model(options_.niqe_model.empty() ? default_data_dir() / "iqa/niqe_model.json"
                                                      : options_.niqe_model);
  brisque_ = load_brisque_model(options_.brisque_model.empty() ? default_data_dir() / "iqa/brisque_model.json"
                                                               : options_.brisque_model);
  server_ = std::make_unique<httplib::Server>();
  install_routes();
}

RenderService::~RenderService() { stop(); }

void RenderService::install_routes() {
  auto& srv = *server_;
  srv.Get("/health", [](const httplib::Request&, httplib::Response& res) { reply_json(res, 200, {{"status", "ok"}}); });

  srv.Get("/scenes", guarded([this](const httplib::Request&, httplib::Response& res) {
            json list = json::array();
            for (const auto& [id, e] : *registry_.snapshot()) list.push_back(e->metadata);
            reply_json(res, 200, {{"scenes", list}});
          }));

  srv.Post("/scenes/refresh", guarded([this](const httplib::Request&, httplib::Response& res) {
             const auto snap = registry_.refresh();
             json ids = json::array();
             for (const auto& [id, e] : *snap) ids.push_back(id);
             reply_json(res, 200, {{"scenes", ids}});
           }));

  srv.Get(R"(/scenes/([A-Za-z0-9._-]+)/splat)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto e = lookup(*registry_.snapshot(), req.matches[1]);
            res.set_content(read_file(e->ply), "application/octet-stream");
          }));

  srv.Get(R"(/scenes/([A-Za-z0-9._-]+)/manifest)",
          guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto e = lookup(*registry_.snapshot(), req.matches[1]);
            if (e->manifest.empty()) throw NotFoundError("scene '" + e->id + "' has no manifest");
            res.set_content(read_file(e->manifest), "application/json");
          }));

  srv.Post("/render", guarded([this](const httplib::Request& req, httplib::Response& res) {
             const auto r = read_request(req, res, options_.max_dim);
             if (!r) return;
             const auto e = lookup(*registry_.snapshot(), r->scene);
             const auto t0 = std::chrono::steady_clock::now();
             std::string png;
             if (r->enhance) {
               png = encode_png(clamp01(options_.enhancer->enhance(clamp01(render(e->scene, r->camera).rgb),
                                                                   options_.enhance_scale)));
             } else {
               png = render_png(e->scene, r->camera);
             }
             const double ms =
                 std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
             char buf[32];
             std::snprintf(buf, sizeof buf, "%.3f", ms);
             res.set_header("X-Render-Time-Ms", buf);
             res.set_header("X-Render-Pose", camera_to_json(r->camera).dump());
             res.set_header("X-Scene-Id", e->id);
             res.set_header("X-Enhanced", r->enhance ? "1" : "0");
             res.set_content(std::move(png), "image/png");
           }));

  srv.Post("/evaluate-frame", guarded([this](const httplib::Request& req, httplib::Response& res) {
             const auto r = read_request(req, res, options_.max_dim);
             if (!r) return;
             const auto e = lookup(*registry_.snapshot(), r->scene);
             const auto t0 = std::chrono::steady_clock::now();
             ImageBuffer frame = clamp01(render(e->scene, r->camera).rgb);
             if (r->enhance) frame = clamp01(options_.enhancer->enhance(frame, options_.enhance_scale));
             const double ms =
                 std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
             json out{{"scene", e->id}, {"pose", camera_to_json(r->camera)}, {"enhanced", r->enhance},
                      {"width", frame.width()}, {"height", frame.height()}, {"render_time_ms", ms},
                      {"niqe", nullptr}, {"brisque", nullptr}};
             json errors = json::array();
             try {
               out["niqe"] = niqe_score(frame, niqe_);
             } catch (const std::exception& ex) {
               errors.push_back(std::string("niqe: ") + ex.what());
             }
             try {
               out["brisque"] = brisque_score(frame, brisque_);
             } catch (const std::exception& ex) {
               errors.push_back(std::string("brisque: ") + ex.what());
             }
             out["errors"] = errors;
             reply_json(res, 200, out);
           }));
}

int RenderService::start(const std::string& host, int port) {
  host_ = host;
  port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (port_ < 0) throw TransportError("render service: cannot bind " + host + ":" + std::to_string(port), 0, false);
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void RenderService::listen(const std::string& host, int port) {
  host_ = host;
  port_ = port;
  if (!server_->listen(host, port)) {
    throw TransportError("render service: cannot listen on " + host + ":" + std::to_string(port), 0, false);
  }
}

void RenderService::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

std::string RenderService::base_url() const { return "http://" + host_ + ":" + std::to_string(port_); }

}  // namespace verse3d
