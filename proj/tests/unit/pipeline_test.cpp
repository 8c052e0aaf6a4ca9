#include <cstdlib>
#include <thread>

#include <gtest/gtest.h>

#include "verse3d/backends/mock.hpp"
#include "verse3d/backends/mock_server.hpp"
#include "verse3d/core/errors.hpp"
#include "verse3d/core/hash.hpp"
#include "verse3d/core/image_io.hpp"
#include "verse3d/pipeline/config.hpp"
#include "verse3d/pipeline/export.hpp"
#include "verse3d/pipeline/pipeline.hpp"
#include "verse3d/pipeline/render_request.hpp"
#include "verse3d/pipeline/service.hpp"
#include "verse3d/splat/scene_io.hpp"

#include <httplib.h>

using namespace verse3d;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kAssets = VERSE3D_ASSETS_DIR;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("verse3d_pipeline_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

PipelineConfig test_config(const fs::path& out) {
  PipelineConfig c = PipelineConfig::offline_preset();
  c.output_dir = out;
  c.training.iterations = 30;
  c.backends.llm_analysis.transcript = kAssets / "transcripts/old_pond.json";
  c.backends.llm_enhance.transcript = kAssets / "transcripts/old_pond.json";
  return c;
}

HaikuInput old_pond() { return find_haiku(load_haiku_samples(kAssets / "haiku/samples.json"), "old-pond"); }

std::string config_error(const json& j) {
  try {
    PipelineConfig::from_json(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

json parse_doc(const fs::path& run) { return json::parse(read_file(run / "parse/parse.json")); }

// One complete run shared by the read-only tests.
class RunFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new fs::path(scratch("shared"));
    cfg_ = new PipelineConfig(test_config(*root_));
    manifest_ = new PipelineManifest(run_pipeline(old_pond(), *cfg_));
  }
  static void TearDownTestSuite() {
    delete manifest_;
    delete cfg_;
    delete root_;
  }
  static fs::path run_dir() { return *root_ / "old-pond"; }

  static fs::path* root_;
  static PipelineConfig* cfg_;
  static PipelineManifest* manifest_;
};

fs::path* RunFixture::root_ = nullptr;
PipelineConfig* RunFixture::cfg_ = nullptr;
PipelineManifest* RunFixture::manifest_ = nullptr;

}  // namespace

// ---------------------------------------------------------------- config

TEST(PipelineConfig, DefaultsFollowPublishedStageSettings) {
  const PipelineConfig c;
  EXPECT_EQ(c.resolutions.t2i.width, 1024);
  EXPECT_EQ(c.resolutions.t2i.height, 1024);
  EXPECT_EQ(c.resolutions.outpaint.height, 512);
  EXPECT_EQ(c.resolutions.outpaint.width, 1024);
  EXPECT_EQ(c.resolutions.pointcloud.height, 1024);
  EXPECT_EQ(c.resolutions.pointcloud.width, 2048);
  EXPECT_EQ(c.parser.token_budget, 225);
  EXPECT_EQ(c.tangents.count, 20);
  EXPECT_EQ(c.perturbation.lambdas, (std::vector<double>{1.0, 2.0, 4.0}));
  EXPECT_DOUBLE_EQ(c.perturbation.base_range, 0.05);
  EXPECT_EQ(c.point_stride, 1);
  EXPECT_FALSE(c.ablation.disable_enhancement);
  EXPECT_FALSE(c.ablation.disable_key_elements);
  EXPECT_NO_THROW(c.validate());
  EXPECT_NO_THROW(PipelineConfig::offline_preset().validate());
}

TEST(PipelineConfig, JsonRoundTrip) {
  PipelineConfig c = PipelineConfig::offline_preset();
  c.seeds.t2i = 99;
  c.backends.depth.kind = BackendSpec::Kind::kHttp;
  c.backends.depth.endpoint.base_url = "http://127.0.0.1:9";
  c.backends.depth.endpoint.model = "depth-model";
  c.ablation.disable_key_elements = true;
  const json j = c.to_json();
  EXPECT_EQ(PipelineConfig::from_json(j).to_json(), j);
}

TEST(PipelineConfig, ErrorsNameTheFieldPath) {
  EXPECT_EQ(config_error({{"training", {{"iteratons", 5}}}}), "training.iteratons: unknown field");
  EXPECT_EQ(config_error({{"resolutions", {{"t2i", {{"width", "big"}}}}}}),
            "resolutions.t2i.width: expected an integer");
  EXPECT_EQ(config_error({{"resolutions", {{"t2i", {{"width", 512}}}}}}), "resolutions.t2i: must be square");
  EXPECT_EQ(config_error({{"resolutions", {{"pointcloud", {{"width", 1000}}}}}}),
            "resolutions.pointcloud: width must be twice the height");
  EXPECT_EQ(config_error({{"perturbation", {{"lambdas", {1.0, 4.0, 2.0}}}}}),
            "perturbation.lambdas[2]: lambdas must be strictly increasing");
  EXPECT_EQ(config_error({{"perturbation", {{"lambdas", {1.0, "x"}}}}}),
            "perturbation.lambdas[1]: expected a number");
  EXPECT_EQ(config_error({{"backends", {{"depth", {{"kind", "http"}, {"base_url", "ftp://x"}}}}}}),
            "backends.depth.base_url: must start with http://");
  EXPECT_EQ(config_error({{"backends", {{"depth", {{"kind", "grpc"}}}}}}),
            "backends.depth.kind: expected \"mock\" or \"http\"");
  EXPECT_EQ(config_error({{"seeds", {{"t2i", -1}}}}), "seeds.t2i: expected a non-negative integer");
  EXPECT_EQ(config_error({{"depth", {{"far", 0.1}}}}), "depth.far: must exceed depth.near");
  EXPECT_EQ(config_error({{"init", {{"point_stride", 0}}}}), "init.point_stride: must be >= 1");
  EXPECT_EQ(config_error({{"bogus", true}}), "bogus: unknown field");
  EXPECT_EQ(config_error(json::array()), "<root>: expected an object");
}

TEST(PipelineConfig, Overrides) {
  json doc = PipelineConfig{}.to_json();
  apply_override(doc, "training.iterations=7");
  apply_override(doc, "output_dir=/tmp/x");
  apply_override(doc, "perturbation.lambdas=[1,3]");
  const PipelineConfig c = PipelineConfig::from_json(doc);
  EXPECT_EQ(c.training.iterations, 7);
  EXPECT_EQ(c.output_dir, "/tmp/x");
  EXPECT_EQ(c.perturbation.lambdas, (std::vector<double>{1.0, 3.0}));
  EXPECT_THROW(apply_override(doc, "novalue"), ConfigError);
  EXPECT_THROW(apply_override(doc, "a..b=1"), ConfigError);
}

// ---------------------------------------------------------------- manifest

TEST(Manifest, RoundTripAndTimestampStripping) {
  PipelineManifest m;
  m.haiku_id = "h";
  m.haiku_text = "t";
  m.config_hash = "c";
  m.status = "partial";
  StageRecord s;
  s.name = "parse";
  s.status = "done";
  s.input_hash = "abc";
  s.backends["llm_analysis"] = "mock";
  s.seeds["x"] = 3;
  s.metrics["m"] = 0.5;
  s.artifacts.push_back({"parse", "parse/parse.json", "00"});
  s.started_at = utc_timestamp();
  s.finished_at = utc_timestamp();
  m.stages.push_back(s);
  const json j = m.to_json();
  EXPECT_EQ(PipelineManifest::from_json(j).to_json(), j);
  const json stripped = strip_timestamps(j);
  EXPECT_FALSE(stripped["stages"][0].contains("started_at"));
  EXPECT_FALSE(stripped["stages"][0].contains("finished_at"));
  EXPECT_THROW(PipelineManifest::from_json(json{{"format", "other"}}), ParseError);
}

TEST(Manifest, VerifyRejectsOutOfOrderStages) {
  PipelineManifest m;
  StageRecord a, b;
  a.name = "t2i";
  a.status = "failed";
  b.name = "parse";
  b.status = "failed";
  m.stages = {a, b};
  EXPECT_THROW(m.verify(fs::temp_directory_path()), ContractViolation);
}

// ---------------------------------------------------------------- pipeline

TEST_F(RunFixture, CompletesAllStagesWithVerifiedArtifacts) {
  ASSERT_EQ(manifest_->status, "complete");
  ASSERT_EQ(manifest_->stages.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(manifest_->stages[i].name, pipeline_stage_names()[i]);
    EXPECT_EQ(manifest_->stages[i].status, "done");
  }
  EXPECT_NO_THROW(manifest_->verify(run_dir()));
  const SplatScene scene = load_scene(scene_path(run_dir(), *manifest_));
  EXPECT_GT(scene.gaussians.size(), 0u);
  EXPECT_EQ(PipelineManifest::load(run_dir() / "manifest.json").to_json(), manifest_->to_json());
  const auto& opt = manifest_->done_stage("optimize");
  EXPECT_LT(opt.metrics.at("final_loss"), opt.metrics.at("initial_loss"));
  EXPECT_GE(manifest_->done_stage("outpaint").metrics.at("preservation_psnr"), 30.0);
}

TEST_F(RunFixture, KeyElementsAppearVerbatimInTheOutpaintPrompt) {
  const json doc = parse_doc(run_dir());
  const std::string prompt = json::parse(read_file(run_dir() / "outpaint/request.json"))["prompt"];
  EXPECT_EQ(prompt, doc["outpaint_prompt"]);
  for (const auto& e : doc["result"]["elements"]["elements"]) {
    EXPECT_NE(prompt.find(e["phrase"].get<std::string>()), std::string::npos) << e["phrase"];
  }
  EXPECT_NE(prompt.find("[must include: old pond, frog jumping in, sound of water]"), std::string::npos);
  const std::string t2i_prompt = json::parse(read_file(run_dir() / "t2i/metadata.json"))["prompt"];
  EXPECT_EQ(t2i_prompt.find("[must include:"), std::string::npos);
}

TEST_F(RunFixture, ResumeMakesNoBackendCalls) {
  const StageBackends b = make_backends(*cfg_);
  RunStats stats;
  const PipelineManifest again = run_pipeline(old_pond(), *cfg_, b, {}, &stats);
  EXPECT_EQ(b.call_count(), 0u);
  EXPECT_TRUE(stats.executed.empty());
  EXPECT_EQ(stats.skipped, pipeline_stage_names());
  EXPECT_EQ(strip_timestamps(again.to_json()), strip_timestamps(manifest_->to_json()));
  EXPECT_EQ(again.to_json(), manifest_->to_json());  // skipped stages keep their records
}

TEST_F(RunFixture, SecondRunIsByteIdentical) {
  const fs::path other = scratch("second");
  const PipelineManifest m2 = run_pipeline(old_pond(), test_config(other));
  EXPECT_EQ(strip_timestamps(m2.to_json()), strip_timestamps(manifest_->to_json()));
  for (const auto& s : m2.stages) {
    for (const auto& a : s.artifacts) {
      EXPECT_EQ(read_file(other / "old-pond" / a.path), read_file(run_dir() / a.path)) << a.path;
    }
  }
}

TEST_F(RunFixture, EvaluateWritesSixRecordsBesideTheManifest) {
  EvaluateOptions opts;
  opts.trajectory.frames = 6;
  opts.trajectory.width = 192;
  opts.trajectory.height = 192;
  const StageBackends b = make_backends(*cfg_);
  const EvaluationReport r = evaluate_run(run_dir(), opts, b);
  ASSERT_EQ(r.frames.size(), 6u);
  double sum = 0.0;
  int n = 0;
  for (const auto& f : r.frames) {
    if (f.brisque) {
      sum += *f.brisque;
      ++n;
    }
    EXPECT_TRUE(f.qalign.has_value());
    EXPECT_TRUE(f.vqa.has_value());
  }
  ASSERT_GT(n, 0);
  EXPECT_NEAR(*r.brisque.mean, sum / n, 1e-12);
  EXPECT_TRUE(fs::exists(run_dir() / "evaluation.json"));
  EXPECT_TRUE(fs::exists(run_dir() / "evaluation.csv"));
  EXPECT_EQ(r.prompt, parse_doc(run_dir())["vqa_statement"]);
  const std::string first = read_file(run_dir() / "evaluation.json");
  evaluate_run(run_dir(), opts, make_backends(*cfg_));
  EXPECT_EQ(read_file(run_dir() / "evaluation.json"), first);
}

TEST_F(RunFixture, EvaluateWithEnhancementCallsTheEnhancerPerFrame) {
  EvaluateOptions opts;
  opts.trajectory.frames = 3;
  opts.trajectory.width = 96;
  opts.trajectory.height = 96;
  opts.enhance = true;
  opts.use_qalign = false;
  opts.use_vqa = false;
  const StageBackends b = make_backends(*cfg_);
  const EvaluationReport r = evaluate_run(run_dir(), opts, b);
  EXPECT_EQ(r.frames.size(), 3u);
  EXPECT_EQ(b.call_count(), 3u);
  fs::remove(run_dir() / "evaluation.json");
  fs::remove(run_dir() / "evaluation.csv");
}

TEST(Pipeline, AblationWithoutKeyElementsDropsTheClause) {
  PipelineConfig c = test_config(scratch("ablation_elements"));
  c.ablation.disable_key_elements = true;
  const StageBackends b = make_backends(c);
  run_pipeline(old_pond(), c, b, {"outpaint"});
  const json doc = parse_doc(c.output_dir / "old-pond");
  const std::string prompt = json::parse(read_file(c.output_dir / "old-pond/outpaint/request.json"))["prompt"];
  EXPECT_EQ(prompt.find("[must include:"), std::string::npos);
  EXPECT_EQ(prompt, doc["result"]["stage3"]["text"]);
  EXPECT_EQ(prompt.find("frog jumping in"), std::string::npos);
  EXPECT_EQ(prompt.find("sound of water"), std::string::npos);
}

namespace {

class RefusingLlm final : public LlmBackend {
 public:
  std::string complete(const std::vector<ChatMessage>&) const override { throw Error("LLM must not be called"); }
  std::string identifier() const override { return "refusing"; }
};

}  // namespace

TEST(Pipeline, AblationWithoutLlmsUsesTheVerse) {
  PipelineConfig c = test_config(scratch("ablation_llm"));
  c.ablation.disable_enhancement = true;
  c.ablation.disable_key_elements = true;
  StageBackends raw = make_backends(c);
  raw.llm_analysis = std::make_shared<RefusingLlm>();
  raw.llm_enhance = std::make_shared<RefusingLlm>();
  const PipelineManifest m = run_pipeline(old_pond(), c, with_call_counting(raw), {"t2i"});
  const json doc = parse_doc(c.output_dir / "old-pond");
  EXPECT_TRUE(doc["result"].is_null());
  EXPECT_EQ(doc["outpaint_prompt"], doc["t2i_prompt"]);
  EXPECT_EQ(m.done_stage("parse").backends.count("llm_analysis"), 0u);
}

TEST(Pipeline, AblationWithoutEnhancementKeepsTheElements) {
  PipelineConfig c = test_config(scratch("ablation_enh"));
  c.ablation.disable_enhancement = true;
  run_pipeline(old_pond(), c, make_backends(c), {"parse"});
  const json doc = parse_doc(c.output_dir / "old-pond");
  EXPECT_TRUE(doc["result"]["stage3"].is_null());
  const std::string prompt = doc["outpaint_prompt"];
  EXPECT_NE(prompt.find("[must include: old pond, frog jumping in, sound of water]"), std::string::npos);
}

TEST(Pipeline, UntilStopsAfterTheNamedStage) {
  PipelineConfig c = test_config(scratch("until"));
  RunStats stats;
  const PipelineManifest m = run_pipeline(old_pond(), c, make_backends(c), {"depth"}, &stats);
  EXPECT_EQ(m.status, "partial");
  EXPECT_EQ(stats.executed, (std::vector<std::string>{"parse", "t2i", "outpaint", "depth"}));
  EXPECT_THROW(run_pipeline(old_pond(), c, make_backends(c), {"bogus"}), ConfigError);
}

TEST(Pipeline, ChangedTrainingSettingsRerunOnlyTheOptimizer) {
  PipelineConfig c = test_config(scratch("rerun"));
  c.training.iterations = 5;
  run_pipeline(old_pond(), c);
  c.training.iterations = 6;
  const StageBackends b = make_backends(c);
  RunStats stats;
  run_pipeline(old_pond(), c, b, {}, &stats);
  EXPECT_EQ(stats.executed, (std::vector<std::string>{"optimize"}));
  EXPECT_EQ(b.call_count(), 0u);
}

TEST(Pipeline, TamperedArtifactIsRecomputed) {
  PipelineConfig c = test_config(scratch("tamper"));
  c.training.iterations = 2;
  run_pipeline(old_pond(), c);
  const fs::path depth = c.output_dir / "old-pond/depth/depth.exr";
  const std::string original = read_file(depth);
  write_file(depth, "garbage");
  const StageBackends b = make_backends(c);
  RunStats stats;
  const PipelineManifest m = run_pipeline(old_pond(), c, b, {}, &stats);
  // Regenerated bytes are identical, so downstream input hashes still match.
  EXPECT_EQ(stats.executed, (std::vector<std::string>{"depth"}));
  EXPECT_EQ(b.call_count(), 1u);
  EXPECT_EQ(read_file(depth), original);
  EXPECT_NO_THROW(m.verify(c.output_dir / "old-pond"));
}

TEST(Pipeline, ZeroIterationsReturnsTheInitialScene) {
  PipelineConfig c = test_config(scratch("zero"));
  c.training.iterations = 0;
  const PipelineManifest m = run_pipeline(old_pond(), c);
  EXPECT_EQ(m.done_stage("optimize").artifact("scene").sha256, m.done_stage("init").artifact("scene").sha256);
}

namespace {

class FailingDepth final : public DepthBackend {
 public:
  PanoImage estimate_depth(const PanoImage&) const override { throw TransportError("depth backend down", 503); }
  std::string identifier() const override { return "mock:depth"; }
};

}  // namespace

TEST(Pipeline, FailureIsRecordedAndResumable) {
  PipelineConfig c = test_config(scratch("failure"));
  c.training.iterations = 2;
  StageBackends good = make_backends(c);
  StageBackends raw = good;
  raw.depth = std::make_shared<FailingDepth>();
  const StageBackends bad = with_call_counting(raw);
  try {
    run_pipeline(old_pond(), c, bad);
    FAIL() << "expected StageFailure";
  } catch (const StageFailure& e) {
    EXPECT_EQ(e.stage(), "depth");
  }
  const fs::path run = c.output_dir / "old-pond";
  const PipelineManifest failed = PipelineManifest::load(run / "manifest.json");
  EXPECT_EQ(failed.status, "failed");
  ASSERT_EQ(failed.stages.size(), 4u);
  EXPECT_EQ(failed.stages.back().name, "depth");
  EXPECT_EQ(failed.stages.back().status, "failed");
  EXPECT_NE(failed.stages.back().error.find("depth backend down"), std::string::npos);
  EXPECT_TRUE(fs::exists(run / "outpaint/pano.png"));

  RunStats stats;
  const PipelineManifest done = run_pipeline(old_pond(), c, make_backends(c), {}, &stats);
  EXPECT_EQ(done.status, "complete");
  EXPECT_EQ(stats.skipped, (std::vector<std::string>{"parse", "t2i", "outpaint"}));
}

TEST(Pipeline, RejectsUnsafeHaikuIds) {
  PipelineConfig c = test_config(scratch("ids"));
  EXPECT_THROW(run_pipeline(HaikuInput{"../x", "old pond", ""}, c), DomainError);
  EXPECT_THROW(run_pipeline(HaikuInput{"a b", "old pond", ""}, c), DomainError);
}

TEST(Pipeline, HttpBackendsReproduceTheMockArtifacts) {
  MockServerOptions so;
  so.transcript = kAssets / "transcripts/old_pond.json";
  MockServer server(so);
  server.start();

  PipelineConfig local = test_config(scratch("local"));
  PipelineConfig remote = test_config(scratch("remote"));
  remote.trace = true;
  for (BackendSpec* s : {&remote.backends.llm_analysis, &remote.backends.llm_enhance, &remote.backends.t2i,
                         &remote.backends.outpaint, &remote.backends.depth}) {
    s->kind = BackendSpec::Kind::kHttp;
    s->endpoint.base_url = server.base_url();
    s->endpoint.model = "mock";
    s->endpoint.retries = 0;
  }
  const RunOptions until{"outpaint"};
  run_pipeline(old_pond(), local, make_backends(local), until);
  const PipelineManifest m = run_pipeline(old_pond(), remote, make_backends(remote), until);
  const fs::path a = local.output_dir / "old-pond";
  const fs::path b = remote.output_dir / "old-pond";
  EXPECT_EQ(parse_doc(a)["outpaint_prompt"], parse_doc(b)["outpaint_prompt"]);
  EXPECT_EQ(read_file(a / "t2i/image.png"), read_file(b / "t2i/image.png"));
  EXPECT_EQ(read_file(a / "outpaint/pano.png"), read_file(b / "outpaint/pano.png"));
  EXPECT_EQ(m.done_stage("t2i").backends.at("t2i"), server.base_url() + "#mock");

  ASSERT_EQ(m.trace, "trace.jsonl");
  std::ifstream trace(b / "trace.jsonl");
  std::set<std::string> routes;
  for (std::string line; std::getline(trace, line);) routes.insert(json::parse(line)["route"].get<std::string>());
  EXPECT_EQ(routes, (std::set<std::string>{"/v1/llm", "/v1/t2i", "/v1/t2i/tokenize", "/v1/outpaint"}));
  server.stop();
}

// ---------------------------------------------------------------- render requests

TEST(RenderRequest, RoundTripsLosslessly) {
  RenderRequest r;
  r.scene = "s";
  r.camera.position = {0.1, -0.2, 1.0 / 3.0};
  r.camera.orientation = yaw_pitch_rotation(0.3, -0.1);
  r.camera.fov_x = 1.1;
  r.camera.width = 33;
  r.camera.height = 17;
  r.enhance = true;
  const RenderRequest back = RenderRequest::from_json(json::parse(r.to_json().dump()), 64);
  EXPECT_EQ(back.camera, r.camera);
  EXPECT_EQ(back.scene, "s");
  EXPECT_TRUE(back.enhance);
}

TEST(RenderRequest, ValidationNamesTheField) {
  json j = RenderRequest{"s", PerspectiveCamera{}, false}.to_json();
  auto field_of = [](const json& body) {
    try {
      RenderRequest::from_json(body, 64);
    } catch (const ValidationError& e) {
      return e.field();
    }
    return std::string();
  };
  json bad = j;
  bad["camera"]["orientation"] = {2.0, 0.0, 0.0, 0.0};
  EXPECT_EQ(field_of(bad), "camera.orientation");
  bad = j;
  bad["camera"]["width"] = 65;
  EXPECT_EQ(field_of(bad), "camera.width");
  bad = j;
  bad["camera"]["fov_x"] = "wide";
  EXPECT_EQ(field_of(bad), "camera.fov_x");
  bad = j;
  bad["camera"]["position"] = {0.0, 1.0};
  EXPECT_EQ(field_of(bad), "camera.position");
  bad = j;
  bad["camera"]["roll"] = 0.0;
  EXPECT_EQ(field_of(bad), "camera.roll");
  bad = j;
  bad["camera"]["fov_x"] = 4.0;
  EXPECT_EQ(field_of(bad), "camera");
  bad = j;
  bad.erase("scene");
  EXPECT_EQ(field_of(bad), "scene");
}

// ---------------------------------------------------------------- service

namespace {

json tangent_views(const fs::path& run) {
  return json::parse(read_file(run / "optimize/tangents.json"))["views"];
}

std::string render_body(const std::string& scene, const json& camera, bool enhance = false) {
  return json{{"scene", scene}, {"camera", camera}, {"enhance", enhance}}.dump();
}

}  // namespace

class ServiceFixture : public RunFixture {
 protected:
  void SetUp() override {
    ServiceOptions o;
    o.max_dim = 1024;
    service_ = std::make_unique<RenderService>(*root_, o);
    service_->start();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", service_->port());
    client_->set_read_timeout(60, 0);
  }
  void TearDown() override { service_->stop(); }

  std::unique_ptr<RenderService> service_;
  std::unique_ptr<httplib::Client> client_;
};

TEST_F(ServiceFixture, ListsScenes) {
  const auto res = client_->Get("/scenes");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  const json j = json::parse(res->body);
  ASSERT_EQ(j["scenes"].size(), 1u);
  const json& s = j["scenes"][0];
  EXPECT_EQ(s["id"], "old-pond");
  EXPECT_GT(s["gaussians"].get<int>(), 0);
  EXPECT_EQ(s["haiku"]["id"], "old-pond");
  EXPECT_NE(s["prompt"].get<std::string>().find("[must include:"), std::string::npos);
}

TEST_F(ServiceFixture, TangentPoseReproducesTheTrainingRender) {
  for (const auto& v : tangent_views(run_dir())) {
    const auto res = client_->Post("/render", render_body("old-pond", v["camera"]), "application/json");
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 200);
    EXPECT_EQ(res->get_header_value("Content-Type"), "image/png");
    EXPECT_EQ(res->body, read_file(run_dir() / v["png"].get<std::string>())) << v["png"];
    EXPECT_EQ(json::parse(res->get_header_value("X-Render-Pose")), v["camera"]);
    EXPECT_FALSE(res->get_header_value("X-Render-Time-Ms").empty());
    EXPECT_EQ(res->get_header_value("X-Enhanced"), "0");
  }
}

TEST_F(ServiceFixture, PoseEchoRoundTripsArbitraryDoubles) {
  PerspectiveCamera cam;
  cam.position = {0.1, 0.2, -0.30000000000000004};
  cam.orientation = yaw_pitch_rotation(1.234567890123, 0.1);
  cam.width = 40;
  cam.height = 30;
  const json sent = camera_to_json(cam);
  const auto res = client_->Post("/render", render_body("old-pond", sent), "application/json");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(camera_from_json(json::parse(res->get_header_value("X-Render-Pose"))), cam);
  EXPECT_EQ(decode_png(res->body).width(), 40);
}

TEST_F(ServiceFixture, ErrorsAreClassified) {
  const json cam = tangent_views(run_dir())[0]["camera"];
  auto res = client_->Post("/render", render_body("missing", cam), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
  EXPECT_EQ(json::parse(res->body)["error"]["type"], "not_found");

  json bad = cam;
  bad["orientation"] = {0.5, 0.5, 0.5, 0.0};
  res = client_->Post("/render", render_body("old-pond", bad), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(json::parse(res->body)["error"]["field"], "camera.orientation");

  bad = cam;
  bad["width"] = 4096;
  res = client_->Post("/render", render_body("old-pond", bad), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(json::parse(res->body)["error"]["field"], "camera.width");

  res = client_->Post("/render", "{not json", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);

  res = client_->Get("/scenes/missing/splat");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
}

TEST_F(ServiceFixture, ConcurrentRendersAreIndependent) {
  const json views = tangent_views(run_dir());
  std::vector<std::string> expected;
  for (int i = 0; i < 4; ++i) expected.push_back(read_file(run_dir() / views[i]["png"].get<std::string>()));
  std::vector<std::string> got(8);
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      httplib::Client c("127.0.0.1", service_->port());
      c.set_read_timeout(60, 0);
      const auto res = c.Post("/render", render_body("old-pond", views[t % 4]["camera"]), "application/json");
      if (res && res->status == 200) got[t] = res->body;
    });
  }
  for (auto& th : threads) th.join();
  for (int t = 0; t < 8; ++t) EXPECT_EQ(sha256_hex(got[t]), sha256_hex(expected[t % 4])) << t;
}

TEST_F(ServiceFixture, SplatManifestAndRefresh) {
  auto res = client_->Get("/scenes/old-pond/splat");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(res->body, read_file(scene_path(run_dir(), *manifest_)));
  res = client_->Get("/scenes/old-pond/manifest");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(json::parse(res->body)["haiku"]["id"], "old-pond");
  const auto before = service_->registry().snapshot();
  res = client_->Post("/scenes/refresh", "", "application/json");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(json::parse(res->body)["scenes"], json::array({"old-pond"}));
  EXPECT_NE(service_->registry().snapshot(), before);
  EXPECT_EQ(before->size(), 1u);  // old snapshot still intact for holders
}

TEST_F(ServiceFixture, EnhancedRenderAndFrameEvaluation) {
  json cam = tangent_views(run_dir())[0]["camera"];
  auto res = client_->Post("/render", render_body("old-pond", cam, true), "application/json");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("X-Enhanced"), "1");
  EXPECT_EQ(decode_png(res->body).width(), 2 * cam["width"].get<int>());

  cam["width"] = 192;
  cam["height"] = 192;
  res = client_->Post("/evaluate-frame", render_body("old-pond", cam), "application/json");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  const json j = json::parse(res->body);
  EXPECT_TRUE(j["niqe"].is_number());
  EXPECT_TRUE(j["brisque"].is_number());
  EXPECT_EQ(j["pose"], cam);
}

TEST(Service, RequiresAScene) {
  EXPECT_THROW(RenderService(scratch("empty")), NotFoundError);
}

// ---------------------------------------------------------------- export

TEST_F(RunFixture, ExportBundleLoads) {
  const fs::path out = scratch("bundle");
  const ExportedBundle b = export_bundle(run_dir(), out);
  const json meta = json::parse(read_file(b.metadata));
  EXPECT_EQ(meta["format"], kBundleFormat);
  EXPECT_GT(meta["gaussians"].get<int>(), 0);
  EXPECT_EQ(meta["ply_sha256"], sha256_file(b.ply.string()));
  EXPECT_EQ(meta["ply_layout"]["properties"][0], "x");
  EXPECT_EQ(load_scene(b.ply), load_scene(scene_path(run_dir(), *manifest_)));
  EXPECT_EQ(meta["haiku"]["id"], "old-pond");
}
