#include "verse3d/pipeline/pipeline.hpp"

#include <cstdio>
#include <functional>

#include <spdlog/spdlog.h>

#include "verse3d/backends/http.hpp"
#include "verse3d/backends/mock.hpp"
#include "verse3d/core/errors.hpp"
#include "verse3d/core/hash.hpp"
#include "verse3d/core/image_io.hpp"
#include "verse3d/geometry/panorama.hpp"
#include "verse3d/optim/optimizer.hpp"
#include "verse3d/pipeline/render_request.hpp"
#include "verse3d/pointcloud/pointcloud.hpp"
#include "verse3d/splat/init.hpp"
#include "verse3d/splat/render.hpp"
#include "verse3d/splat/scene_io.hpp"

namespace verse3d {

namespace fs = std::filesystem;
using nlohmann::json;

void TraceSink::open(const fs::path& path) {
  std::lock_guard lock(mutex_);
  if (out_.is_open()) out_.close();
  out_.open(path, std::ios::app);
  if (!out_) throw Error("cannot open trace file " + path.string());
}

void TraceSink::close() {
  std::lock_guard lock(mutex_);
  if (out_.is_open()) out_.close();
}

void TraceSink::record(const std::string& route, const json& request, const json& response) {
  std::lock_guard lock(mutex_);
  if (!out_.is_open()) return;
  out_ << json{{"time", utc_timestamp()}, {"route", route}, {"request", request}, {"response", response}}.dump()
       << '\n';
  out_.flush();
}

namespace {

using Counter = std::shared_ptr<std::atomic<std::size_t>>;

class CountingLlm final : public LlmBackend {
 public:
  CountingLlm(std::shared_ptr<const LlmBackend> inner, Counter n) : inner_(std::move(inner)), n_(std::move(n)) {}
  std::string complete(const std::vector<ChatMessage>& messages) const override {
    ++*n_;
    return inner_->complete(messages);
  }
  std::string identifier() const override { return inner_->identifier(); }

 private:
  std::shared_ptr<const LlmBackend> inner_;
  Counter n_;
};

class CountingT2I final : public TextToImageBackend {
 public:
  CountingT2I(std::shared_ptr<const TextToImageBackend> inner, Counter n)
      : inner_(std::move(inner)), n_(std::move(n)) {}
  ImageResult text_to_image(const std::string& prompt, std::uint64_t seed, int width, int height) const override {
    ++*n_;
    return inner_->text_to_image(prompt, seed, width, height);
  }
  int count_tokens(const std::string& text) const override {
    ++*n_;
    return inner_->count_tokens(text);
  }
  std::string identifier() const override { return inner_->identifier(); }

 private:
  std::shared_ptr<const TextToImageBackend> inner_;
  Counter n_;
};

class CountingOutpaint final : public OutpaintBackend {
 public:
  CountingOutpaint(std::shared_ptr<const OutpaintBackend> inner, Counter n)
      : inner_(std::move(inner)), n_(std::move(n)) {}
  PanoImage outpaint(const OutpaintRequest& request) const override {
    ++*n_;
    return inner_->outpaint(request);
  }
  std::string identifier() const override { return inner_->identifier(); }

 private:
  std::shared_ptr<const OutpaintBackend> inner_;
  Counter n_;
};

class CountingDepth final : public DepthBackend {
 public:
  CountingDepth(std::shared_ptr<const DepthBackend> inner, Counter n) : inner_(std::move(inner)), n_(std::move(n)) {}
  PanoImage estimate_depth(const PanoImage& pano) const override {
    ++*n_;
    return inner_->estimate_depth(pano);
  }
  std::string identifier() const override { return inner_->identifier(); }

 private:
  std::shared_ptr<const DepthBackend> inner_;
  Counter n_;
};

class CountingEnhance final : public EnhanceBackend {
 public:
  CountingEnhance(std::shared_ptr<const EnhanceBackend> inner, Counter n)
      : inner_(std::move(inner)), n_(std::move(n)) {}
  ImageBuffer enhance(const ImageBuffer& image, int scale) const override {
    ++*n_;
    return inner_->enhance(image, scale);
  }
  std::string identifier() const override { return inner_->identifier(); }

 private:
  std::shared_ptr<const EnhanceBackend> inner_;
  Counter n_;
};

class CountingVqa final : public VqaBackend {
 public:
  CountingVqa(std::shared_ptr<const VqaBackend> inner, Counter n) : inner_(std::move(inner)), n_(std::move(n)) {}
  double yes_probability(const VqaQuery& query) const override {
    ++*n_;
    return inner_->yes_probability(query);
  }
  std::string identifier() const override { return inner_->identifier(); }

 private:
  std::shared_ptr<const VqaBackend> inner_;
  Counter n_;
};

class CountingQalign final : public QalignBackend {
 public:
  CountingQalign(std::shared_ptr<const QalignBackend> inner, Counter n)
      : inner_(std::move(inner)), n_(std::move(n)) {}
  double quality(const ImageBuffer& image) const override {
    ++*n_;
    return inner_->quality(image);
  }
  std::string identifier() const override { return inner_->identifier(); }

 private:
  std::shared_ptr<const QalignBackend> inner_;
  Counter n_;
};

template <typename Wrapper, typename T>
std::shared_ptr<const T> wrap(std::shared_ptr<const T> inner, const Counter& n) {
  if (!inner) return nullptr;
  return std::make_shared<Wrapper>(std::move(inner), n);
}

}  // namespace

StageBackends with_call_counting(StageBackends raw) {
  StageBackends b;
  b.calls = std::make_shared<std::atomic<std::size_t>>(0);
  b.trace = raw.trace ? raw.trace : std::make_shared<TraceSink>();
  b.llm_analysis = wrap<CountingLlm>(raw.llm_analysis, b.calls);
  b.llm_enhance = wrap<CountingLlm>(raw.llm_enhance, b.calls);
  b.t2i = wrap<CountingT2I>(raw.t2i, b.calls);
  b.outpaint = wrap<CountingOutpaint>(raw.outpaint, b.calls);
  b.depth = wrap<CountingDepth>(raw.depth, b.calls);
  b.enhance = wrap<CountingEnhance>(raw.enhance, b.calls);
  b.vqa = wrap<CountingVqa>(raw.vqa, b.calls);
  b.qalign = wrap<CountingQalign>(raw.qalign, b.calls);
  return b;
}

StageBackends make_backends(const PipelineConfig& cfg) {
  StageBackends raw;
  raw.trace = std::make_shared<TraceSink>();
  const WireTrace trace = [sink = raw.trace](const std::string& path, const json& req, const json& resp) {
    sink->record(path, req, resp);
  };
  auto client = [&](const BackendSpec& s) { return HttpJsonClient(s.endpoint, trace); };
  auto llm = [&](const BackendSpec& s) -> std::shared_ptr<const LlmBackend> {
    if (!s.is_mock()) return std::make_shared<HttpLlm>(client(s));
    auto procedural = std::make_shared<ProceduralLlm>(cfg.seeds.mock);
    if (s.transcript.empty()) return procedural;
    return std::make_shared<ScriptedLlm>(ScriptedLlm::from_file(s.transcript, procedural));
  };
  const auto& b = cfg.backends;
  raw.llm_analysis = llm(b.llm_analysis);
  raw.llm_enhance = llm(b.llm_enhance);
  if (b.t2i.is_mock()) {
    raw.t2i = std::make_shared<MockTextToImage>();
  } else {
    raw.t2i = std::make_shared<HttpTextToImage>(client(b.t2i));
  }
  if (b.outpaint.is_mock()) {
    raw.outpaint = std::make_shared<MockOutpaint>();
  } else {
    raw.outpaint = std::make_shared<HttpOutpaint>(client(b.outpaint));
  }
  if (b.depth.is_mock()) {
    raw.depth = std::make_shared<MockDepth>(cfg.seeds.depth);
  } else {
    raw.depth = std::make_shared<HttpDepth>(client(b.depth));
  }
  if (b.enhance.is_mock()) {
    raw.enhance = std::make_shared<MockEnhance>();
  } else {
    raw.enhance = std::make_shared<HttpEnhance>(client(b.enhance));
  }
  if (b.vqa.is_mock()) {
    raw.vqa = std::make_shared<MockVqa>(cfg.seeds.mock);
  } else {
    raw.vqa = std::make_shared<HttpVqa>(client(b.vqa));
  }
  if (b.qalign.is_mock()) {
    raw.qalign = std::make_shared<MockQalign>(cfg.seeds.mock);
  } else {
    raw.qalign = std::make_shared<HttpQalign>(client(b.qalign));
  }
  return with_call_counting(std::move(raw));
}

fs::path run_directory(const PipelineConfig& cfg, const HaikuInput& haiku) {
  return cfg.output_dir / haiku.id;
}

namespace {

void check_haiku_id(const std::string& id) {
  if (id.empty()) throw DomainError("haiku id must not be empty");
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                    c == '_' || c == '.';
    if (!ok) throw DomainError("haiku id may only contain letters, digits, '-', '_' and '.': " + id);
  }
  if (id == "." || id == "..") throw DomainError("invalid haiku id " + id);
}

json templates_json(const PromptTemplates& t) {
  return {{"version", t.version}, {"system", t.system}, {"stage1", t.stage1}, {"stage2", t.stage2},
          {"stage3", t.stage3},   {"tighten", t.tighten}, {"repair", t.repair}};
}

// Artifact bookkeeping for one stage.
class StageWriter {
 public:
  StageWriter(fs::path dir, StageRecord& rec) : dir_(std::move(dir)), rec_(rec) {}

  fs::path path(const std::string& rel) const { return dir_ / rel; }

  void put(const std::string& role, const std::string& rel, std::string_view bytes) {
    fs::create_directories(path(rel).parent_path());
    write_file(path(rel), bytes);
    rec_.artifacts.push_back({role, rel, sha256_hex(bytes)});
  }

  // For files already written by a library routine.
  void adopt(const std::string& role, const std::string& rel) {
    rec_.artifacts.push_back({role, rel, sha256_file(path(rel).string())});
  }

  void mkdir(const std::string& rel) const { fs::create_directories(path(rel)); }

 private:
  fs::path dir_;
  StageRecord& rec_;
};

class Runner {
 public:
  Runner(const HaikuInput& haiku, const PipelineConfig& cfg, const StageBackends& b)
      : haiku_(haiku), cfg_(cfg), b_(b), cj_(cfg.to_json()), dir_(run_directory(cfg, haiku)) {}

  PipelineManifest run(const RunOptions& opts, RunStats* stats) {
    const auto& names = pipeline_stage_names();
    if (!opts.until_stage.empty() &&
        std::find(names.begin(), names.end(), opts.until_stage) == names.end()) {
      throw ConfigError("until_stage: unknown stage " + opts.until_stage);
    }
    fs::create_directories(dir_);
    const fs::path manifest_path = dir_ / "manifest.json";
    std::optional<PipelineManifest> prev;
    if (fs::exists(manifest_path)) {
      try {
        prev = PipelineManifest::load(manifest_path);
      } catch (const Error& e) {
        spdlog::warn("ignoring unreadable manifest {}: {}", manifest_path.string(), e.what());
      }
    }

    cur_.haiku_id = haiku_.id;
    cur_.haiku_text = haiku_.text;
    json identity = cj_;
    identity.erase("output_dir");
    identity.erase("trace");
    cur_.config_hash = hash_json(identity);
    if (cfg_.trace) {
      b_.trace->open(dir_ / "trace.jsonl");
      cur_.trace = "trace.jsonl";
    }

    bool past_until = false;
    for (const auto& name : names) {
      const std::string input_hash = input_hash_for(name);
      const StageRecord* old = prev ? prev->find(name) : nullptr;
      if (old && old->status == "done" && old->input_hash == input_hash && artifacts_intact(*old)) {
        cur_.stages.push_back(*old);
        if (stats && !past_until) stats->skipped.push_back(name);
      } else if (past_until) {
        break;
      } else {
        execute(name, input_hash, manifest_path);
        if (stats) stats->executed.push_back(name);
      }
      if (name == opts.until_stage) past_until = true;
    }
    cur_.status = cur_.stages.size() == names.size() ? "complete" : "partial";
    cur_.save(manifest_path);
    if (cfg_.trace) b_.trace->close();
    return cur_;
  }

 private:
  bool artifacts_intact(const StageRecord& s) const {
    for (const auto& a : s.artifacts) {
      const fs::path p = dir_ / a.path;
      if (!fs::exists(p) || sha256_file(p.string()) != a.sha256) return false;
    }
    return true;
  }

  const std::string& sha(const std::string& stage, const std::string& role) const {
    return cur_.done_stage(stage).artifact(role).sha256;
  }

  std::string input_hash_for(const std::string& name) const {
    json in{{"stage", name}};
    if (name == "parse") {
      in["haiku"] = {{"id", haiku_.id}, {"text", haiku_.text}, {"language", haiku_.language}};
      in["templates"] = hash_json(templates_json(PromptTemplates::load(cfg_.resolved_templates_dir())));
      in["backends"] = {{"llm_analysis", b_.llm_analysis->identifier()},
                        {"llm_enhance", b_.llm_enhance->identifier()},
                        {"tokenizer", b_.t2i->identifier()}};
      in["parser"] = cj_["parser"];
      in["ablation"] = cj_["ablation"];
    } else if (name == "t2i") {
      in["parse"] = sha("parse", "parse");
      in["backend"] = b_.t2i->identifier();
      in["seed"] = cfg_.seeds.t2i;
      in["resolution"] = cj_["resolutions"]["t2i"];
    } else if (name == "outpaint") {
      in["parse"] = sha("parse", "parse");
      in["image"] = sha("t2i", "image");
      in["backend"] = b_.outpaint->identifier();
      in["seed"] = cfg_.seeds.outpaint;
      in["resolution"] = cj_["resolutions"]["outpaint"];
    } else if (name == "depth") {
      in["pano"] = sha("outpaint", "pano");
      in["backend"] = b_.depth->identifier();
      in["seed"] = cfg_.seeds.depth;
      in["resolution"] = cj_["resolutions"]["pointcloud"];
    } else if (name == "init") {
      in["pano"] = sha("depth", "pano");
      in["depth"] = sha("depth", "depth");
      in["calibration"] = cj_["depth"];
      in["init"] = cj_["init"];
    } else {
      in["scene"] = sha("init", "scene");
      in["scene_sidecar"] = sha("init", "scene_sidecar");
      in["pano"] = sha("depth", "pano");
      in["depth"] = sha("depth", "depth");
      in["calibration"] = cj_["depth"];
      in["tangents"] = cj_["tangents"];
      in["perturbation"] = cj_["perturbation"];
      in["training"] = cj_["training"];
      in["seeds"] = {{"perturbation", cfg_.seeds.perturbation}, {"training", cfg_.seeds.training}};
    }
    return hash_json(in);
  }

  void execute(const std::string& name, const std::string& input_hash, const fs::path& manifest_path) {
    StageRecord rec;
    rec.name = name;
    rec.input_hash = input_hash;
    rec.started_at = utc_timestamp();
    StageWriter w(dir_, rec);
    spdlog::info("[{}] stage {}", haiku_.id, name);
    try {
      if (name == "parse") {
        parse(rec, w);
      } else if (name == "t2i") {
        t2i(rec, w);
      } else if (name == "outpaint") {
        outpaint(rec, w);
      } else if (name == "depth") {
        depth(rec, w);
      } else if (name == "init") {
        init(rec, w);
      } else {
        optimize_stage(rec, w);
      }
      rec.status = "done";
    } catch (const std::exception& e) {
      rec.status = "failed";
      rec.error = e.what();
      rec.finished_at = utc_timestamp();
      cur_.stages.push_back(rec);
      cur_.status = "failed";
      cur_.save(manifest_path);
      if (cfg_.trace) b_.trace->close();
      throw StageFailure(name, e.what());
    }
    rec.finished_at = utc_timestamp();
    cur_.stages.push_back(std::move(rec));
    cur_.status = "partial";
    cur_.save(manifest_path);
  }

  json parse_doc() const {
    return json::parse(read_file(dir_ / cur_.done_stage("parse").artifact("parse").path));
  }

  void parse(StageRecord& rec, StageWriter& w) {
    const PromptTemplates templates = PromptTemplates::load(cfg_.resolved_templates_dir());
    const FallbackTokenCounter counter(b_.t2i);
    json doc;
    if (cfg_.ablation.disable_enhancement && cfg_.ablation.disable_key_elements) {
      // No LLM at all: the verse is the prompt.
      const EnhancedPrompt raw = raw_haiku_prompt(haiku_, counter, cfg_.parser.token_budget);
      doc["result"] = nullptr;
      doc["t2i_prompt"] = raw.text;
      doc["outpaint_prompt"] = raw.text;
      doc["vqa_statement"] = haiku_.text;
    } else {
      const ParseResult r = parse_haiku(haiku_, *b_.llm_analysis, *b_.llm_enhance, counter, templates,
                                        cfg_.ablation, cfg_.parser);
      doc["result"] = r.to_json();
      doc["t2i_prompt"] =
          r.stage3 ? r.stage3->text : raw_haiku_prompt(haiku_, counter, cfg_.parser.token_budget).text;
      doc["outpaint_prompt"] = r.prompt.text;
      doc["vqa_statement"] = r.analysis.translation.empty() ? haiku_.text : r.analysis.translation;
      rec.backends["llm_analysis"] = b_.llm_analysis->identifier();
      if (r.stage3) rec.backends["llm_enhance"] = b_.llm_enhance->identifier();
    }
    rec.backends["tokenizer"] = b_.t2i->identifier();
    doc["templates_version"] = templates.version;
    w.put("parse", "parse/parse.json", doc.dump(2) + "\n");
  }

  void t2i(StageRecord& rec, StageWriter& w) {
    const json doc = parse_doc();
    const auto& res = cfg_.resolutions.t2i;
    const ImageResult out =
        b_.t2i->text_to_image(doc["t2i_prompt"].get<std::string>(), cfg_.seeds.t2i, res.width, res.height);
    if (out.image.width() != res.width || out.image.height() != res.height || out.image.channels() != 3) {
      throw ProtocolError("t2i backend returned an image of the wrong shape");
    }
    rec.backends["t2i"] = b_.t2i->identifier();
    rec.seeds["t2i"] = cfg_.seeds.t2i;
    w.put("image", "t2i/image.png", encode_png(clamp01(out.image)));
    const json meta{{"prompt", doc["t2i_prompt"]}, {"seed", cfg_.seeds.t2i}, {"backend_metadata", out.metadata}};
    w.put("metadata", "t2i/metadata.json", meta.dump(2) + "\n");
  }

  void outpaint(StageRecord& rec, StageWriter& w) {
    const json doc = parse_doc();
    const auto& res = cfg_.resolutions.outpaint;
    OutpaintRequest req;
    const ImageBuffer image = read_png(dir_ / cur_.done_stage("t2i").artifact("image").path);
    w.put("face", "outpaint/face.png",
          encode_png(clamp01(resize_bicubic(image, kOutpaintFaceSize, kOutpaintFaceSize))));
    req.central_face = read_png(w.path("outpaint/face.png"));
    req.mask = central_face_mask(res.width, res.height);
    req.prompt = doc["outpaint_prompt"].get<std::string>();
    req.seed = cfg_.seeds.outpaint;
    req.width = res.width;
    req.height = res.height;
    req.validate();
    const PanoImage pano = b_.outpaint->outpaint(req);
    if (pano.width() != res.width || pano.height() != res.height || pano.channels() != 3) {
      throw ProtocolError("outpaint backend returned a panorama of the wrong shape");
    }
    rec.backends["outpaint"] = b_.outpaint->identifier();
    rec.seeds["outpaint"] = cfg_.seeds.outpaint;
    const ImageBuffer stored = clamp01(pano.buffer());
    w.put("pano", "outpaint/pano.png", encode_png(stored));
    w.put("mask", "outpaint/mask.png", encode_png(req.mask));
    const json request{{"prompt", req.prompt}, {"seed", req.seed}, {"width", req.width}, {"height", req.height}};
    w.put("request", "outpaint/request.json", request.dump(2) + "\n");
    rec.metrics["preservation_psnr"] = outpaint_preservation_psnr(req.central_face, PanoImage(stored));
  }

  void depth(StageRecord& rec, StageWriter& w) {
    const auto& res = cfg_.resolutions.pointcloud;
    const ImageBuffer pano = read_png(dir_ / cur_.done_stage("outpaint").artifact("pano").path);
    w.put("pano", "depth/pano.png", encode_png(clamp01(resize_bicubic(pano, res.width, res.height))));
    const PanoImage full(read_png(w.path("depth/pano.png")));
    const PanoImage d = b_.depth->estimate_depth(full);
    if (d.width() != res.width || d.height() != res.height || d.channels() != 1) {
      throw ProtocolError("depth backend returned a map of the wrong shape");
    }
    rec.backends["depth"] = b_.depth->identifier();
    rec.seeds["depth"] = cfg_.seeds.depth;
    write_depth_exr(w.path("depth/depth.exr"), d.buffer());
    w.adopt("depth", "depth/depth.exr");
  }

  void init(StageRecord& rec, StageWriter& w) {
    const PanoImage rgb(read_png(dir_ / cur_.done_stage("depth").artifact("pano").path));
    const PanoImage d(read_depth_exr(dir_ / cur_.done_stage("depth").artifact("depth").path));
    const PointCloud full = depth_pano_to_points(rgb, d, cfg_.depth);
    const PointCloud cloud = subsample(full, cfg_.point_stride);
    w.mkdir("init");
    write_point_cloud(w.path("init/points.ply"), cloud);
    w.adopt("points", "init/points.ply");
    const SplatScene scene = init_from_pointcloud(cloud, cfg_.init);
    save_scene(w.path("init/scene.ply"), scene);
    w.adopt("scene", "init/scene.ply");
    w.adopt("scene_sidecar", fs::relative(scene_sidecar_path(w.path("init/scene.ply")), dir_).generic_string());
    rec.metrics["points"] = static_cast<double>(full.count());
    rec.metrics["gaussians"] = static_cast<double>(scene.gaussians.size());
  }

  void optimize_stage(StageRecord& rec, StageWriter& w) {
    const SplatScene scene = load_scene(dir_ / cur_.done_stage("init").artifact("scene").path);
    const PanoImage rgb(read_png(dir_ / cur_.done_stage("depth").artifact("pano").path));
    const PanoImage d(read_depth_exr(dir_ / cur_.done_stage("depth").artifact("depth").path));
    const PanoImage calibrated = calibrate_depth(d, cfg_.depth);
    const auto tangents = cfg_.tangent_cameras();
    const auto views = build_training_set(rgb, calibrated, tangents, cfg_.resolved_perturbation());
    const OptimizeResult result = optimize(scene, views, cfg_.resolved_training());
    rec.seeds["perturbation"] = cfg_.seeds.perturbation;
    rec.seeds["training"] = cfg_.seeds.training;

    w.mkdir("optimize/tangents");
    const fs::path stem = w.path("optimize/scene");
    save_checkpoint(stem.string(), result.scene, result.state, false);
    w.adopt("scene", "optimize/scene.ply");
    w.adopt("scene_sidecar", fs::relative(scene_sidecar_path(w.path("optimize/scene.ply")), dir_).generic_string());
    w.adopt("train_state", "optimize/scene.train.json");

    // Training-view renders of the stored scene, replayable through /render.
    const SplatScene stored = load_scene(w.path("optimize/scene.ply"));
    json list = json::array();
    for (std::size_t i = 0; i < tangents.size(); ++i) {
      char name[64];
      std::snprintf(name, sizeof name, "optimize/tangents/%02zu.png", i);
      const std::string png = render_png(stored, tangents[i]);
      w.put("tangent_render", name, png);
      list.push_back({{"index", i}, {"camera", camera_to_json(tangents[i])}, {"png", name},
                      {"sha256", sha256_hex(png)}});
    }
    w.put("tangents", "optimize/tangents.json", json{{"views", list}}.dump(2) + "\n");
    rec.metrics["iterations"] = result.state.iteration;
    if (!result.state.loss_history.empty()) {
      rec.metrics["initial_loss"] = result.state.loss_history.front();
      rec.metrics["final_loss"] = result.state.loss_history.back();
    }
    rec.metrics["gaussians"] = static_cast<double>(result.scene.gaussians.size());
  }

  const HaikuInput& haiku_;
  const PipelineConfig& cfg_;
  const StageBackends& b_;
  json cj_;
  fs::path dir_;
  PipelineManifest cur_;
};

}  // namespace

PipelineManifest run_pipeline(const HaikuInput& haiku, const PipelineConfig& cfg, const StageBackends& backends,
                              const RunOptions& opts, RunStats* stats) {
  haiku.validate();
  check_haiku_id(haiku.id);
  cfg.validate();
  return Runner(haiku, cfg, backends).run(opts, stats);
}

PipelineManifest run_pipeline(const HaikuInput& haiku, const PipelineConfig& cfg) {
  return run_pipeline(haiku, cfg, make_backends(cfg));
}

fs::path scene_path(const fs::path& run_dir, const PipelineManifest& m) {
  return run_dir / m.done_stage("optimize").artifact("scene").path;
}

EvaluationReport evaluate_run(const fs::path& run_dir, const EvaluateOptions& opts, const StageBackends& b) {
  const PipelineManifest m = PipelineManifest::load(run_dir / "manifest.json");
  const StageRecord& opt = m.done_stage("optimize");
  for (const auto& a : opt.artifacts) {
    if (a.role != "scene" && a.role != "scene_sidecar") continue;
    if (!fs::exists(run_dir / a.path) || sha256_file((run_dir / a.path).string()) != a.sha256) {
      throw NotFoundError("scene artifact missing or modified: " + a.path);
    }
  }
  const SplatScene scene = load_scene(scene_path(run_dir, m));
  const json doc = json::parse(read_file(run_dir / m.done_stage("parse").artifact("parse").path));
  const std::string statement = doc.value("vqa_statement", m.haiku_text);

  const NiqeModel niqe = load_niqe_model(opts.niqe_model.empty() ? default_data_dir() / "iqa/niqe_model.json"
                                                                 : opts.niqe_model);
  const BrisqueModel brisque = load_brisque_model(
      opts.brisque_model.empty() ? default_data_dir() / "iqa/brisque_model.json" : opts.brisque_model);
  const IqaModels models{&niqe, &brisque};
  ExternalScorers scorers;
  if (opts.use_qalign && b.qalign) {
    scorers.qalign = [q = b.qalign](const ImageBuffer& img) { return q->quality(img); };
  }
  if (opts.use_vqa && b.vqa) {
    scorers.vqa = [v = b.vqa](const ImageBuffer& img, const std::string& s) {
      return v->yes_probability(VqaQuery{img, s});
    };
  }

  const auto poses = make_trajectory(opts.trajectory);
  EvaluationReport report;
  if (!opts.enhance) {
    report = evaluate_trajectory(scene, poses, models, scorers, statement);
  } else {
    if (!b.enhance) throw ConfigError("enhance: no enhancement backend configured");
    check_enhance_scale(opts.enhance_scale);
    std::vector<ImageBuffer> frames;
    for (const auto& p : poses) {
      frames.push_back(b.enhance->enhance(clamp01(render(scene, p.camera).rgb), opts.enhance_scale));
    }
    report = evaluate_frames(frames, poses, models, scorers, statement);
  }
  write_file(run_dir / "evaluation.json", report_to_json(report).dump(2) + "\n");
  write_file(run_dir / "evaluation.csv", report_to_csv(report));
  return report;
}

}  // namespace verse3d
