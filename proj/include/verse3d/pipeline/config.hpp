#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "verse3d/backends/http.hpp"
#include "verse3d/optim/optimizer.hpp"
#include "verse3d/optim/training_set.hpp"
#include "verse3d/parser/parser.hpp"
#include "verse3d/pointcloud/pointcloud.hpp"
#include "verse3d/splat/init.hpp"

namespace verse3d {

/// Asset and data roots. The VERSE3D_ASSETS_DIR / VERSE3D_DATA_DIR environment
/// variables override the source-tree defaults baked in at build time.
std::filesystem::path default_assets_dir();
std::filesystem::path default_data_dir();

/// One external model: either the seeded mock or an HTTP endpoint.
struct BackendSpec {
  enum class Kind { kMock, kHttp };
  Kind kind = Kind::kMock;
  BackendEndpoint endpoint;           // kHttp only
  std::filesystem::path transcript;   // mock LLMs only; empty = procedural answers

  bool is_mock() const noexcept { return kind == Kind::kMock; }
};

struct BackendsConfig {
  BackendSpec llm_analysis;  // stages 1 and 2
  BackendSpec llm_enhance;   // stage 3
  BackendSpec t2i;
  BackendSpec outpaint;
  BackendSpec depth;
  BackendSpec enhance;
  BackendSpec vqa;
  BackendSpec qalign;
};

struct Resolution {
  int width = 0;
  int height = 0;
};

struct ResolutionConfig {
  Resolution t2i{1024, 1024};
  Resolution outpaint{1024, 512};
  Resolution pointcloud{2048, 1024};
};

struct TangentConfig {
  int count = 20;
  double fov_deg = 80.0;
  int resolution = 512;
};

struct SeedConfig {
  std::uint64_t mock = 0;  // seeds of the mock depth/vqa/qalign/llm models
  std::uint64_t t2i = 1;
  std::uint64_t outpaint = 2;
  std::uint64_t depth = 3;
  std::uint64_t perturbation = 4;
  std::uint64_t training = 5;
};

struct PipelineConfig {
  std::filesystem::path output_dir = "runs";
  std::filesystem::path templates_dir;  // empty = <assets>/templates
  BackendsConfig backends;
  ResolutionConfig resolutions;
  ParserOptions parser;
  DepthCalibration depth;
  InitOptions init;
  int point_stride = 1;
  TangentConfig tangents;
  PerturbationConfig perturbation{0.05, {1.0, 2.0, 4.0}, 20, 0};
  TrainConfig training;
  ParseFlags ablation;
  SeedConfig seeds;
  bool trace = false;

  /// Throws ConfigError whose message starts with the offending field path.
  void validate() const;

  nlohmann::json to_json() const;
  /// Overlays `j` on the defaults. Unknown keys and type mismatches throw
  /// ConfigError naming the full field path; the result is validated.
  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::filesystem::path& path);

  /// Reduced resolutions and iteration counts for offline runs on one core.
  static PipelineConfig offline_preset();

  std::filesystem::path resolved_templates_dir() const;
  PerturbationConfig resolved_perturbation() const;  // seed filled in
  TrainConfig resolved_training() const;             // seed filled in
  std::vector<PerspectiveCamera> tangent_cameras() const;
};

/// Applies "a.b.c=value" to a config document. The value is parsed as JSON
/// when possible and taken as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

}  // namespace verse3d
