// verse3d command-line interface.
#include <algorithm>
#include <csignal>
#include <cstdlib>
#include <iostream>
#include <numbers>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "verse3d/backends/mock.hpp"
#include "verse3d/backends/mock_server.hpp"
#include "verse3d/core/errors.hpp"
#include "verse3d/core/image_io.hpp"
#include "verse3d/iqa/niqe.hpp"
#include "verse3d/pipeline/config.hpp"
#include "verse3d/pipeline/export.hpp"
#include "verse3d/pipeline/pipeline.hpp"
#include "verse3d/pipeline/render_request.hpp"
#include "verse3d/pipeline/service.hpp"
#include "verse3d/splat/render.hpp"
#include "verse3d/splat/scene_io.hpp"

using namespace verse3d;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

struct ConfigFlags {
  std::string config;
  std::string preset = "default";
  std::vector<std::string> overrides;
  std::string output;
  bool mock = false;
  std::string transcript;
  int iterations = -1;
  bool disable_enhancement = false;
  bool disable_key_elements = false;
  bool trace = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "Pipeline config (JSON)");
    cmd->add_option("--preset", preset, "Base settings before --config: default | offline")
        ->check(CLI::IsMember({"default", "offline"}));
    cmd->add_option("--set", overrides, "Override a config field, e.g. training.iterations=500");
    cmd->add_option("--output", output, "Output directory (output_dir)");
    cmd->add_flag("--mock", mock, "Use the seeded mock for every backend");
    cmd->add_option("--transcript", transcript, "Scripted LLM transcript for mock LLMs");
    cmd->add_option("--iterations", iterations, "training.iterations");
    cmd->add_flag("--disable-enhancement", disable_enhancement, "ablation.disable_enhancement");
    cmd->add_flag("--disable-key-elements", disable_key_elements, "ablation.disable_key_elements");
    cmd->add_flag("--trace", trace, "Log wire payloads to <run>/trace.jsonl");
  }

  PipelineConfig build() const {
    // --mock without a config runs at the offline preset.
    const bool offline = preset == "offline" || (mock && config.empty() && preset == "default");
    json doc = (offline ? PipelineConfig::offline_preset() : PipelineConfig{}).to_json();
    if (!config.empty()) {
      std::ifstream in(config);
      if (!in) throw NotFoundError("config not found: " + config);
      try {
        doc.merge_patch(json::parse(in));
      } catch (const json::parse_error& e) {
        throw ConfigError(config + ": " + e.what());
      }
    }
    for (const auto& o : overrides) apply_override(doc, o);
    if (!output.empty()) doc["output_dir"] = output;
    if (iterations >= 0) doc["training"]["iterations"] = iterations;
    if (disable_enhancement) doc["ablation"]["disable_enhancement"] = true;
    if (disable_key_elements) doc["ablation"]["disable_key_elements"] = true;
    if (trace) doc["trace"] = true;
    if (mock) {
      const std::string t =
          transcript.empty() ? (default_assets_dir() / "transcripts/old_pond.json").string() : transcript;
      for (auto& [name, spec] : doc["backends"].items()) {
        spec = name.rfind("llm_", 0) == 0 ? json{{"kind", "mock"}, {"transcript", t}} : json{{"kind", "mock"}};
      }
    } else if (!transcript.empty()) {
      doc["backends"]["llm_analysis"]["transcript"] = transcript;
      doc["backends"]["llm_enhance"]["transcript"] = transcript;
    }
    return PipelineConfig::from_json(doc);
  }
};

struct HaikuFlags {
  std::string id = "old-pond";
  std::string text;
  std::string samples;

  void attach(CLI::App* cmd) {
    cmd->add_option("--haiku", id, "Haiku id (from the samples file, or the id for --haiku-text)");
    cmd->add_option("--haiku-text", text, "Verse text; lines separated by newlines or ' / '");
    cmd->add_option("--samples", samples, "Haiku samples JSON");
  }

  HaikuInput build() const {
    if (!text.empty()) {
      HaikuInput h{id, text, ""};
      std::string::size_type p;
      while ((p = h.text.find(" / ")) != std::string::npos) h.text.replace(p, 3, "\n");
      return h;
    }
    const fs::path path = samples.empty() ? default_assets_dir() / "haiku/samples.json" : fs::path(samples);
    return find_haiku(load_haiku_samples(path), id);
  }
};

void print_manifest_summary(const PipelineManifest& m, const RunStats& stats, const fs::path& dir) {
  json stages = json::array();
  for (const auto& s : m.stages) {
    const bool ran = std::find(stats.executed.begin(), stats.executed.end(), s.name) != stats.executed.end();
    stages.push_back({{"name", s.name}, {"status", s.status}, {"executed", ran}});
  }
  std::cout << json{{"run_dir", dir.string()}, {"status", m.status}, {"stages", stages}}.dump(2) << "\n";
}

int run_stages(const ConfigFlags& cf, const HaikuFlags& hf, const std::string& until) {
  const PipelineConfig cfg = cf.build();
  const HaikuInput haiku = hf.build();
  const StageBackends backends = make_backends(cfg);
  RunStats stats;
  const PipelineManifest m = run_pipeline(haiku, cfg, backends, RunOptions{until}, &stats);
  print_manifest_summary(m, stats, run_directory(cfg, haiku));
  spdlog::info("backend calls: {}", backends.call_count());
  return 0;
}

SceneEntry open_scene(const std::string& dir) {
  return load_scene_entry(dir, fs::weakly_canonical(dir).filename().string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"verse3d: haiku to navigable 3D gaussian scenes"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace | debug | info | warn | error | off");

  struct StageCmd {
    const char* name;
    const char* help;
    const char* until;
  };
  const StageCmd stage_cmds[] = {
      {"parse", "Stage 1: literary parsing into an image prompt", "parse"},
      {"generate", "Stages 2-3: text-to-image and panorama outpainting", "outpaint"},
      {"depth", "Stage 4: panorama upscaling and depth estimation", "depth"},
      {"init", "Stage 5: point cloud and gaussian initialization", "init"},
      {"optimize", "Stage 5: gaussian optimization and training renders", "optimize"},
      {"run", "All stages", ""},
  };
  std::vector<std::pair<CLI::App*, const StageCmd*>> stage_apps;
  std::vector<std::unique_ptr<ConfigFlags>> cflags;
  std::vector<std::unique_ptr<HaikuFlags>> hflags;
  for (const auto& sc : stage_cmds) {
    CLI::App* cmd = app.add_subcommand(sc.name, sc.help);
    cflags.push_back(std::make_unique<ConfigFlags>());
    hflags.push_back(std::make_unique<HaikuFlags>());
    cflags.back()->attach(cmd);
    hflags.back()->attach(cmd);
    stage_apps.emplace_back(cmd, &sc);
  }

  ConfigFlags show_flags;
  CLI::App* config_cmd = app.add_subcommand("config", "Print the effective pipeline config");
  show_flags.attach(config_cmd);

  std::string render_scene, render_out = "render.png", render_camera;
  int render_tangent = -1, render_width = 512, render_height = 512;
  double render_yaw = 0.0, render_pitch = 0.0, render_fov = 90.0;
  bool render_enhance = false;
  CLI::App* render_cmd = app.add_subcommand("render", "Render one view of a scene");
  render_cmd->add_option("--scene", render_scene, "Run or scene directory")->required();
  render_cmd->add_option("--out", render_out, "Output PNG");
  render_cmd->add_option("--camera", render_camera, "Camera JSON (inline or a file path)");
  render_cmd->add_option("--tangent", render_tangent, "Index of a stored training view");
  render_cmd->add_option("--yaw", render_yaw, "Degrees");
  render_cmd->add_option("--pitch", render_pitch, "Degrees");
  render_cmd->add_option("--fov", render_fov, "Horizontal field of view, degrees");
  render_cmd->add_option("--width", render_width);
  render_cmd->add_option("--height", render_height);
  render_cmd->add_flag("--enhance", render_enhance, "Apply the mock enhancer (x2)");

  ConfigFlags eval_cflags;
  std::string eval_run;
  EvaluateOptions eval_opts;
  double eval_sweep = 360.0, eval_yaw = 0.0, eval_pitch = 0.0, eval_fov = 90.0;
  bool no_qalign = false, no_vqa = false;
  CLI::App* eval_cmd = app.add_subcommand("evaluate", "Score renders along a camera trajectory");
  eval_cflags.attach(eval_cmd);
  eval_cmd->add_option("--run", eval_run, "Run directory")->required();
  eval_cmd->add_option("--frames", eval_opts.trajectory.frames);
  eval_cmd->add_option("--sweep", eval_sweep, "Yaw sweep, degrees");
  eval_cmd->add_option("--yaw", eval_yaw, "Start yaw, degrees");
  eval_cmd->add_option("--pitch", eval_pitch, "Degrees");
  eval_cmd->add_option("--translation", eval_opts.trajectory.translation);
  eval_cmd->add_option("--fov", eval_fov, "Degrees");
  eval_cmd->add_option("--width", eval_opts.trajectory.width);
  eval_cmd->add_option("--height", eval_opts.trajectory.height);
  eval_cmd->add_flag("--enhance", eval_opts.enhance, "Enhance every frame before scoring");
  eval_cmd->add_option("--enhance-scale", eval_opts.enhance_scale);
  eval_cmd->add_flag("--no-qalign", no_qalign);
  eval_cmd->add_flag("--no-vqa", no_vqa);
  eval_cmd->add_option("--niqe-model", eval_opts.niqe_model);
  eval_cmd->add_option("--brisque-model", eval_opts.brisque_model);

  ConfigFlags serve_cflags;
  std::string serve_dir, serve_host = "127.0.0.1";
  int serve_port = 8080;
  ServiceOptions serve_opts;
  CLI::App* serve_cmd = app.add_subcommand("serve", "Run the HTTP render service");
  serve_cflags.attach(serve_cmd);
  serve_cmd->add_option("--scenes", serve_dir, "Scenes directory (or one run directory)")->required();
  serve_cmd->add_option("--host", serve_host);
  serve_cmd->add_option("--port", serve_port);
  serve_cmd->add_option("--max-dim", serve_opts.max_dim, "Largest accepted render width/height");
  serve_cmd->add_option("--enhance-scale", serve_opts.enhance_scale);

  MockServerOptions mock_opts;
  std::string mock_host = "127.0.0.1", mock_token_env, mock_transcript;
  int mock_port = 8700;
  CLI::App* mock_cmd = app.add_subcommand("mock-server", "Serve the mock backends over the /v1 wire contract");
  mock_cmd->add_option("--host", mock_host);
  mock_cmd->add_option("--port", mock_port);
  mock_cmd->add_option("--seed", mock_opts.seed);
  mock_cmd->add_option("--transcript", mock_transcript, "Scripted LLM transcript");
  mock_cmd->add_option("--token-env", mock_token_env, "Require the bearer token held in this env var");
  mock_cmd->add_option("--fail-first", mock_opts.fail_first, "Answer 503 to the first N requests per route");
  mock_cmd->add_option("--depth-offset", mock_opts.depth_offset);
  mock_cmd->add_option("--refuse", mock_opts.refuse_substring, "Refuse t2i prompts containing this");

  std::string export_scene, export_out;
  CLI::App* export_cmd = app.add_subcommand("export", "Write a viewer bundle (scene PLY + metadata.json)");
  export_cmd->add_option("--scene", export_scene, "Run or scene directory")->required();
  export_cmd->add_option("--out", export_out, "Bundle directory")->required();

  std::string fit_dir, fit_out, fit_check;
  CLI::App* fit_cmd = app.add_subcommand("fit-niqe", "Fit the NIQE model on a pristine image directory");
  fit_cmd->add_option("--pristine", fit_dir, "Directory of PNG images")->required();
  fit_cmd->add_option("--out", fit_out, "Model JSON to write");
  fit_cmd->add_option("--check", fit_check, "Compare against this model instead (max abs diff 1e-12)");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    for (std::size_t i = 0; i < stage_apps.size(); ++i) {
      if (*stage_apps[i].first) return run_stages(*cflags[i], *hflags[i], stage_apps[i].second->until);
    }

    if (*config_cmd) {
      std::cout << show_flags.build().to_json().dump(2) << "\n";
      return 0;
    }

    if (*render_cmd) {
      const SceneEntry e = open_scene(render_scene);
      PerspectiveCamera cam;
      if (!render_camera.empty()) {
        const std::string text = fs::exists(render_camera) ? read_file(render_camera) : render_camera;
        cam = camera_from_json(json::parse(text));
      } else if (render_tangent >= 0) {
        const json views = json::parse(read_file(e.dir / "optimize/tangents.json")).at("views");
        if (render_tangent >= static_cast<int>(views.size())) throw NotFoundError("no such training view");
        cam = camera_from_json(views[render_tangent].at("camera"));
      } else {
        cam.orientation = yaw_pitch_rotation(render_yaw * kDeg, render_pitch * kDeg);
        cam.fov_x = render_fov * kDeg;
        cam.width = render_width;
        cam.height = render_height;
      }
      if (render_enhance) {
        const MockEnhance enhancer;
        write_png(render_out, clamp01(enhancer.enhance(clamp01(render(e.scene, cam).rgb), 2)));
      } else {
        write_file(render_out, render_png(e.scene, cam));
      }
      std::cout << json{{"out", render_out}, {"pose", camera_to_json(cam)}}.dump() << "\n";
      return 0;
    }

    if (*eval_cmd) {
      eval_opts.trajectory.yaw_sweep = eval_sweep * kDeg;
      eval_opts.trajectory.yaw_start = eval_yaw * kDeg;
      eval_opts.trajectory.pitch = eval_pitch * kDeg;
      eval_opts.trajectory.fov_x = eval_fov * kDeg;
      eval_opts.use_qalign = !no_qalign;
      eval_opts.use_vqa = !no_vqa;
      const PipelineConfig cfg = eval_cflags.build();
      const EvaluationReport r = evaluate_run(eval_run, eval_opts, make_backends(cfg));
      const json j = report_to_json(r);
      std::cout << json{{"frames", r.frames.size()}, {"aggregate", j["aggregate"]},
                        {"report", (fs::path(eval_run) / "evaluation.json").string()}}
                       .dump(2)
                << "\n";
      return 0;
    }

    if (*serve_cmd) {
      const PipelineConfig cfg = serve_cflags.build();
      serve_opts.enhancer = make_backends(cfg).enhance;
      RenderService service(serve_dir, serve_opts);
      spdlog::info("serving {} scene(s) on http://{}:{}", service.registry().snapshot()->size(), serve_host,
                   serve_port);
      service.listen(serve_host, serve_port);
      return 0;
    }

    if (*mock_cmd) {
      mock_opts.transcript = mock_transcript;
      if (!mock_token_env.empty()) {
        const char* token = std::getenv(mock_token_env.c_str());
        if (!token || !*token) throw ConfigError("--token-env: " + mock_token_env + " is not set");
        mock_opts.required_token = token;
      }
      MockServer server(mock_opts);
      spdlog::info("mock backends on http://{}:{}", mock_host, mock_port);
      server.listen(mock_host, mock_port);
      return 0;
    }

    if (*export_cmd) {
      const ExportedBundle b = export_bundle(export_scene, export_out);
      std::cout << b.metadata_json.dump(2) << "\n";
      return 0;
    }

    if (*fit_cmd) {
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(fit_dir)) {
        if (entry.path().extension() == ".png") files.push_back(entry.path());
      }
      std::sort(files.begin(), files.end());
      std::vector<ImageBuffer> images;
      for (const auto& f : files) images.push_back(read_png(f));
      const NiqeModel model = fit_niqe_model(images);
      spdlog::info("fitted NIQE model on {} images", images.size());
      if (!fit_check.empty()) {
        const NiqeModel ref = load_niqe_model(fit_check);
        const double dm = (model.mean - ref.mean).cwiseAbs().maxCoeff();
        const double dc = (model.covariance - ref.covariance).cwiseAbs().maxCoeff();
        const bool ok = model.patch_size == ref.patch_size && dm <= 1e-12 && dc <= 1e-12;
        std::cout << json{{"match", ok}, {"max_mean_diff", dm}, {"max_cov_diff", dc}}.dump() << "\n";
        return ok ? 0 : 1;
      }
      if (fit_out.empty()) throw ConfigError("fit-niqe: --out or --check is required");
      save_niqe_model(fit_out, model);
      return 0;
    }
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
