#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "verse3d/backends/backends.hpp"
#include "verse3d/iqa/evaluate.hpp"
#include "verse3d/parser/parser.hpp"
#include "verse3d/pipeline/config.hpp"
#include "verse3d/pipeline/manifest.hpp"

namespace verse3d {

/// JSON-lines sink for wire payloads; inactive until opened.
class TraceSink {
 public:
  void open(const std::filesystem::path& path);
  void close();
  void record(const std::string& route, const nlohmann::json& request, const nlohmann::json& response);

 private:
  std::mutex mutex_;
  std::ofstream out_;
};

/// The clients one pipeline run talks to. Every call made through the
/// members increments `calls`.
struct StageBackends {
  std::shared_ptr<const LlmBackend> llm_analysis;
  std::shared_ptr<const LlmBackend> llm_enhance;
  std::shared_ptr<const TextToImageBackend> t2i;
  std::shared_ptr<const OutpaintBackend> outpaint;
  std::shared_ptr<const DepthBackend> depth;
  std::shared_ptr<const EnhanceBackend> enhance;
  std::shared_ptr<const VqaBackend> vqa;
  std::shared_ptr<const QalignBackend> qalign;
  std::shared_ptr<std::atomic<std::size_t>> calls;
  std::shared_ptr<TraceSink> trace;

  std::size_t call_count() const { return calls ? calls->load() : 0; }
};

/// Mocks or HTTP clients per the config, wrapped with call counting.
StageBackends make_backends(const PipelineConfig& cfg);
/// Wraps already-built clients with call counting.
StageBackends with_call_counting(StageBackends raw);

/// A stage threw; the manifest on disk records it as failed.
class StageFailure : public Error {
 public:
  StageFailure(std::string stage, const std::string& what)
      : Error("stage " + stage + " failed: " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct RunOptions {
  std::string until_stage;  // run up to and including this stage; empty = all
};

struct RunStats {
  std::vector<std::string> executed;
  std::vector<std::string> skipped;
};

/// <output_dir>/<haiku id>
std::filesystem::path run_directory(const PipelineConfig& cfg, const HaikuInput& haiku);

/// parse -> t2i -> outpaint -> depth -> init -> optimize, persisting every
/// intermediate under the run directory. A stage is skipped when the existing
/// manifest records it done with the same input hash and its artifacts still
/// verify. Throws StageFailure after recording the failed stage.
PipelineManifest run_pipeline(const HaikuInput& haiku, const PipelineConfig& cfg,
                              const StageBackends& backends, const RunOptions& opts = {},
                              RunStats* stats = nullptr);
PipelineManifest run_pipeline(const HaikuInput& haiku, const PipelineConfig& cfg);

/// The final scene and the path of its PLY.
std::filesystem::path scene_path(const std::filesystem::path& run_dir, const PipelineManifest& m);

struct EvaluateOptions {
  TrajectorySpec trajectory;
  bool enhance = false;  // per-frame enhancement before scoring
  int enhance_scale = 2;
  bool use_qalign = true;
  bool use_vqa = true;
  std::filesystem::path niqe_model;     // empty = <data>/iqa/niqe_model.json
  std::filesystem::path brisque_model;  // empty = <data>/iqa/brisque_model.json
};

/// Renders the trajectory over the optimized scene of a run and scores every
/// frame. Writes evaluation.json and evaluation.csv beside the manifest.
EvaluationReport evaluate_run(const std::filesystem::path& run_dir, const EvaluateOptions& opts,
                              const StageBackends& backends);

}  // namespace verse3d
