#include "verse3d/pipeline/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <set>

#include "verse3d/core/errors.hpp"
#include "verse3d/core/image_io.hpp"
#include "verse3d/geometry/panorama.hpp"

#ifndef VERSE3D_DEFAULT_ASSETS_DIR
#define VERSE3D_DEFAULT_ASSETS_DIR "assets"
#endif
#ifndef VERSE3D_DEFAULT_DATA_DIR
#define VERSE3D_DEFAULT_DATA_DIR "data"
#endif

namespace verse3d {

using nlohmann::json;

std::filesystem::path default_assets_dir() {
  if (const char* env = std::getenv("VERSE3D_ASSETS_DIR"); env && *env) return env;
  return VERSE3D_DEFAULT_ASSETS_DIR;
}

std::filesystem::path default_data_dir() {
  if (const char* env = std::getenv("VERSE3D_DATA_DIR"); env && *env) return env;
  return VERSE3D_DEFAULT_DATA_DIR;
}

namespace {

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ConfigError(path + ": " + msg);
}

// Reads the members of one JSON object, tracking which keys were consumed.
class Reader {
 public:
  Reader(const json* j, std::string path) : j_(j), path_(std::move(path)) {
    if (j_ && !j_->is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
  }

  const std::string& path() const { return path_; }
  bool has(const std::string& key) const { return j_ && j_->contains(key); }

  const json* take(const std::string& key) {
    if (!has(key)) return nullptr;
    used_.insert(key);
    return &(*j_)[key];
  }

  Reader child(const std::string& key) { return Reader(take(key), join(path_, key)); }

  void get(const std::string& key, int& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_integer()) fail(join(path_, key), "expected an integer");
      const auto x = v->get<std::int64_t>();
      if (x < INT32_MIN || x > INT32_MAX) fail(join(path_, key), "out of range");
      out = static_cast<int>(x);
    }
  }
  void get(const std::string& key, std::uint64_t& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() &&
                                      v->get<std::int64_t>() < 0)) {
        fail(join(path_, key), "expected a non-negative integer");
      }
      out = v->get<std::uint64_t>();
    }
  }
  void get(const std::string& key, double& out) {
    if (const json* v = take(key)) {
      if (!v->is_number()) fail(join(path_, key), "expected a number");
      out = v->get<double>();
    }
  }
  void get(const std::string& key, bool& out) {
    if (const json* v = take(key)) {
      if (!v->is_boolean()) fail(join(path_, key), "expected a boolean");
      out = v->get<bool>();
    }
  }
  void get(const std::string& key, std::string& out) {
    if (const json* v = take(key)) {
      if (!v->is_string()) fail(join(path_, key), "expected a string");
      out = v->get<std::string>();
    }
  }
  void get(const std::string& key, std::filesystem::path& out) {
    std::string s = out.string();
    get(key, s);
    out = s;
  }
  void get(const std::string& key, std::vector<double>& out) {
    if (const json* v = take(key)) {
      if (!v->is_array()) fail(join(path_, key), "expected an array of numbers");
      std::vector<double> r;
      for (std::size_t i = 0; i < v->size(); ++i) {
        if (!(*v)[i].is_number()) {
          fail(join(path_, key) + "[" + std::to_string(i) + "]", "expected a number");
        }
        r.push_back((*v)[i].get<double>());
      }
      out = std::move(r);
    }
  }

  void finish() const {
    if (!j_) return;
    for (const auto& [k, v] : j_->items()) {
      if (!used_.count(k)) fail(join(path_, k), "unknown field");
    }
  }

 private:
  const json* j_;
  std::string path_;
  std::set<std::string> used_;
};

json backend_to_json(const BackendSpec& b, bool llm) {
  if (b.is_mock()) {
    json j{{"kind", "mock"}};
    if (llm) j["transcript"] = b.transcript.string();
    return j;
  }
  json j = b.endpoint.to_json();
  j["kind"] = "http";
  return j;
}

void read_backend(Reader r, BackendSpec& b, bool llm) {
  std::string kind = b.is_mock() ? "mock" : "http";
  r.get("kind", kind);
  if (kind == "mock") {
    b.kind = BackendSpec::Kind::kMock;
    if (llm) r.get("transcript", b.transcript);
  } else if (kind == "http") {
    b.kind = BackendSpec::Kind::kHttp;
    r.get("base_url", b.endpoint.base_url);
    r.get("token_env", b.endpoint.token_env);
    r.get("timeout_s", b.endpoint.timeout_s);
    r.get("retries", b.endpoint.retries);
    r.get("backoff_initial_s", b.endpoint.backoff_initial_s);
    r.get("model", b.endpoint.model);
  } else {
    fail(join(r.path(), "kind"), "expected \"mock\" or \"http\"");
  }
  r.finish();
}

json resolution_to_json(const Resolution& r) { return {{"width", r.width}, {"height", r.height}}; }

void read_resolution(Reader r, Resolution& out) {
  r.get("width", out.width);
  r.get("height", out.height);
  r.finish();
}

// Field names of BackendsConfig, paired for the JSON mapping.
template <typename Fn>
void for_each_backend(BackendsConfig& b, Fn&& fn) {
  fn("llm_analysis", b.llm_analysis, true);
  fn("llm_enhance", b.llm_enhance, true);
  fn("t2i", b.t2i, false);
  fn("outpaint", b.outpaint, false);
  fn("depth", b.depth, false);
  fn("enhance", b.enhance, false);
  fn("vqa", b.vqa, false);
  fn("qalign", b.qalign, false);
}

void check_resolution(const Resolution& r, const std::string& path) {
  if (r.width < 1 || r.height < 1) fail(path, "dimensions must be positive");
}

template <typename Fn>
void prefixed(const std::string& path, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    fail(path, e.what());
  } catch (const DomainError& e) {
    fail(path, e.what());
  }
}

}  // namespace

void PipelineConfig::validate() const {
  if (output_dir.empty()) fail("output_dir", "must not be empty");
  auto self = *this;
  for_each_backend(self.backends, [](const char* name, const BackendSpec& b, bool) {
    const std::string p = std::string("backends.") + name;
    if (b.is_mock()) {
      if (!b.transcript.empty() && !std::filesystem::exists(b.transcript)) {
        fail(p + ".transcript", "file not found: " + b.transcript.string());
      }
      return;
    }
    const auto& e = b.endpoint;
    if (e.base_url.rfind("http://", 0) != 0) fail(p + ".base_url", "must start with http://");
    if (!(e.timeout_s > 0.0)) fail(p + ".timeout_s", "must be > 0");
    if (e.retries < 0) fail(p + ".retries", "must be >= 0");
    if (!(e.backoff_initial_s >= 0.0)) fail(p + ".backoff_initial_s", "must be >= 0");
  });

  check_resolution(resolutions.t2i, "resolutions.t2i");
  if (resolutions.t2i.width != resolutions.t2i.height) fail("resolutions.t2i", "must be square");
  check_resolution(resolutions.outpaint, "resolutions.outpaint");
  if (resolutions.outpaint.width != 2 * resolutions.outpaint.height) {
    fail("resolutions.outpaint", "width must be twice the height");
  }
  check_resolution(resolutions.pointcloud, "resolutions.pointcloud");
  if (resolutions.pointcloud.width != 2 * resolutions.pointcloud.height) {
    fail("resolutions.pointcloud", "width must be twice the height");
  }

  if (parser.token_budget < 1) fail("parser.token_budget", "must be >= 1");
  if (parser.max_retries < 0) fail("parser.max_retries", "must be >= 0");

  if (!(depth.near_depth > 0.0)) fail("depth.near", "must be > 0");
  if (!(depth.far_depth > depth.near_depth)) fail("depth.far", "must exceed depth.near");

  if (init.sh_degree < 0 || init.sh_degree > kMaxShDegree) fail("init.sh_degree", "must lie in 0..3");
  if (init.k_neighbors < 1) fail("init.k_neighbors", "must be >= 1");
  if (!(init.initial_opacity > 0.0 && init.initial_opacity < 1.0)) {
    fail("init.initial_opacity", "must lie in (0, 1)");
  }
  if (point_stride < 1) fail("init.point_stride", "must be >= 1");

  if (tangents.count < 1) fail("tangents.count", "must be >= 1");
  if (!(tangents.fov_deg > 0.0 && tangents.fov_deg < 180.0)) {
    fail("tangents.fov_deg", "must lie in (0, 180)");
  }
  if (tangents.resolution < 8) fail("tangents.resolution", "must be >= 8");

  if (!(perturbation.base_range > 0.0)) fail("perturbation.base_range", "must be > 0");
  for (std::size_t i = 0; i < perturbation.lambdas.size(); ++i) {
    const std::string p = "perturbation.lambdas[" + std::to_string(i) + "]";
    if (!(perturbation.lambdas[i] > 0.0)) fail(p, "must be > 0");
    if (i > 0 && !(perturbation.lambdas[i] > perturbation.lambdas[i - 1])) {
      fail(p, "lambdas must be strictly increasing");
    }
  }
  if (perturbation.lambdas.empty()) fail("perturbation.lambdas", "must be non-empty");
  if (perturbation.views_per_stage < 0) fail("perturbation.views_per_stage", "must be >= 0");

  if (training.iterations < 0) fail("training.iterations", "must be >= 0");
  if (training.batch_size < 1) fail("training.batch_size", "must be >= 1");
  if (!(training.ssim_weight >= 0.0 && training.ssim_weight <= 1.0)) {
    fail("training.ssim_weight", "must lie in [0, 1]");
  }
  prefixed("training", [&] { training.validate(); });
}

json PipelineConfig::to_json() const {
  json backends_j = json::object();
  auto self = *this;
  for_each_backend(self.backends, [&](const char* name, const BackendSpec& b, bool llm) {
    backends_j[name] = backend_to_json(b, llm);
  });
  const auto& lr = training.lr;
  return {
      {"output_dir", output_dir.string()},
      {"templates_dir", templates_dir.string()},
      {"backends", backends_j},
      {"resolutions",
       {{"t2i", resolution_to_json(resolutions.t2i)},
        {"outpaint", resolution_to_json(resolutions.outpaint)},
        {"pointcloud", resolution_to_json(resolutions.pointcloud)}}},
      {"parser", {{"token_budget", parser.token_budget}, {"max_retries", parser.max_retries}}},
      {"depth",
       {{"mode", depth.mode == DepthMode::kAffineNormalize ? "affine" : "metric"},
        {"near", depth.near_depth},
        {"far", depth.far_depth}}},
      {"init",
       {{"sh_degree", init.sh_degree},
        {"k_neighbors", init.k_neighbors},
        {"initial_opacity", init.initial_opacity},
        {"point_stride", point_stride}}},
      {"tangents",
       {{"count", tangents.count}, {"fov_deg", tangents.fov_deg}, {"resolution", tangents.resolution}}},
      {"perturbation",
       {{"base_range", perturbation.base_range},
        {"lambdas", perturbation.lambdas},
        {"views_per_stage", perturbation.views_per_stage}}},
      {"training",
       {{"iterations", training.iterations},
        {"ssim_weight", training.ssim_weight},
        {"batch_size", training.batch_size},
        {"position_lr_scale", training.position_lr_scale},
        {"double_precision", training.double_precision},
        {"lr",
         {{"position", lr.position},
          {"position_final_factor", lr.position_final_factor},
          {"sh", lr.sh},
          {"opacity", lr.opacity},
          {"scale", lr.scale},
          {"rotation", lr.rotation}}}}},
      {"ablation",
       {{"disable_enhancement", ablation.disable_enhancement},
        {"disable_key_elements", ablation.disable_key_elements}}},
      {"seeds",
       {{"mock", seeds.mock},
        {"t2i", seeds.t2i},
        {"outpaint", seeds.outpaint},
        {"depth", seeds.depth},
        {"perturbation", seeds.perturbation},
        {"training", seeds.training}}},
      {"trace", trace},
  };
}

PipelineConfig PipelineConfig::from_json(const json& j) {
  PipelineConfig c;
  Reader root(&j, "");
  root.get("output_dir", c.output_dir);
  root.get("templates_dir", c.templates_dir);
  {
    Reader r = root.child("backends");
    for_each_backend(c.backends, [&](const char* name, BackendSpec& b, bool llm) {
      if (r.has(name)) read_backend(r.child(name), b, llm);
    });
    r.finish();
  }
  {
    Reader r = root.child("resolutions");
    if (r.has("t2i")) read_resolution(r.child("t2i"), c.resolutions.t2i);
    if (r.has("outpaint")) read_resolution(r.child("outpaint"), c.resolutions.outpaint);
    if (r.has("pointcloud")) read_resolution(r.child("pointcloud"), c.resolutions.pointcloud);
    r.finish();
  }
  {
    Reader r = root.child("parser");
    r.get("token_budget", c.parser.token_budget);
    r.get("max_retries", c.parser.max_retries);
    r.finish();
  }
  {
    Reader r = root.child("depth");
    std::string mode = c.depth.mode == DepthMode::kAffineNormalize ? "affine" : "metric";
    r.get("mode", mode);
    if (mode == "affine") {
      c.depth.mode = DepthMode::kAffineNormalize;
    } else if (mode == "metric") {
      c.depth.mode = DepthMode::kMetricPassthrough;
    } else {
      fail("depth.mode", "expected \"affine\" or \"metric\"");
    }
    r.get("near", c.depth.near_depth);
    r.get("far", c.depth.far_depth);
    r.finish();
  }
  {
    Reader r = root.child("init");
    r.get("sh_degree", c.init.sh_degree);
    r.get("k_neighbors", c.init.k_neighbors);
    r.get("initial_opacity", c.init.initial_opacity);
    r.get("point_stride", c.point_stride);
    r.finish();
  }
  {
    Reader r = root.child("tangents");
    r.get("count", c.tangents.count);
    r.get("fov_deg", c.tangents.fov_deg);
    r.get("resolution", c.tangents.resolution);
    r.finish();
  }
  {
    Reader r = root.child("perturbation");
    r.get("base_range", c.perturbation.base_range);
    r.get("lambdas", c.perturbation.lambdas);
    r.get("views_per_stage", c.perturbation.views_per_stage);
    r.finish();
  }
  {
    Reader r = root.child("training");
    r.get("iterations", c.training.iterations);
    r.get("ssim_weight", c.training.ssim_weight);
    r.get("batch_size", c.training.batch_size);
    r.get("position_lr_scale", c.training.position_lr_scale);
    r.get("double_precision", c.training.double_precision);
    Reader lr = r.child("lr");
    lr.get("position", c.training.lr.position);
    lr.get("position_final_factor", c.training.lr.position_final_factor);
    lr.get("sh", c.training.lr.sh);
    lr.get("opacity", c.training.lr.opacity);
    lr.get("scale", c.training.lr.scale);
    lr.get("rotation", c.training.lr.rotation);
    lr.finish();
    r.finish();
  }
  {
    Reader r = root.child("ablation");
    r.get("disable_enhancement", c.ablation.disable_enhancement);
    r.get("disable_key_elements", c.ablation.disable_key_elements);
    r.finish();
  }
  {
    Reader r = root.child("seeds");
    r.get("mock", c.seeds.mock);
    r.get("t2i", c.seeds.t2i);
    r.get("outpaint", c.seeds.outpaint);
    r.get("depth", c.seeds.depth);
    r.get("perturbation", c.seeds.perturbation);
    r.get("training", c.seeds.training);
    r.finish();
  }
  root.get("trace", c.trace);
  root.finish();
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("config not found: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

PipelineConfig PipelineConfig::offline_preset() {
  PipelineConfig c;
  c.resolutions.t2i = {128, 128};
  c.resolutions.outpaint = {256, 128};
  c.resolutions.pointcloud = {256, 128};
  c.point_stride = 2;
  c.tangents.resolution = 64;
  c.perturbation.views_per_stage = 4;
  c.training.iterations = 120;
  return c;
}

std::filesystem::path PipelineConfig::resolved_templates_dir() const {
  return templates_dir.empty() ? default_assets_dir() / "templates" : templates_dir;
}

PerturbationConfig PipelineConfig::resolved_perturbation() const {
  PerturbationConfig p = perturbation;
  p.seed = seeds.perturbation;
  return p;
}

TrainConfig PipelineConfig::resolved_training() const {
  TrainConfig t = training;
  t.seed = seeds.training;
  return t;
}

std::vector<PerspectiveCamera> PipelineConfig::tangent_cameras() const {
  return verse3d::tangent_cameras(tangents.count, tangents.fov_deg * std::numbers::pi / 180.0,
                                  tangents.resolution);
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must look like path.to.field=value: " + assignment);
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (key.empty()) throw ConfigError("override has an empty path segment: " + path);
    if (!node->is_object()) throw ConfigError(path + ": parent is not an object");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

}  // namespace verse3d
