#include "verse3d/iqa/evaluate.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "verse3d/core/errors.hpp"
#include "verse3d/splat/render.hpp"

namespace verse3d {

namespace {

template <typename Fn>
void score_into(std::optional<double>& slot, const char* name, FrameRecord& rec, Fn&& fn) {
  try {
    const double v = fn();
    if (!std::isfinite(v)) throw DomainError("non-finite score");
    slot = v;
  } catch (const std::exception& e) {
    rec.errors.push_back(std::string(name) + ": " + e.what());
  }
}

void aggregate_one(MetricAggregate& agg, const std::vector<FrameRecord>& frames,
                   std::optional<double> FrameRecord::*field) {
  double sum = 0.0;
  agg.count = 0;
  for (const FrameRecord& f : frames) {
    if ((f.*field).has_value()) {
      sum += *(f.*field);
      ++agg.count;
    }
  }
  agg.mean = agg.count > 0 ? std::optional<double>(sum / agg.count) : std::nullopt;
}

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::string cell(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream s;
  s.precision(17);
  s << *v;
  return s.str();
}

}  // namespace

void TrajectorySpec::validate() const {
  if (frames < 1) throw ConfigError("trajectory.frames must be >= 1");
  if (!std::isfinite(yaw_start) || !std::isfinite(yaw_sweep) || !std::isfinite(pitch) ||
      !std::isfinite(translation) || !center.allFinite()) {
    throw ConfigError("trajectory parameters must be finite");
  }
  if (!(fov_x > 0.0 && fov_x < std::numbers::pi)) throw ConfigError("trajectory.fov_x must lie in (0, pi)");
  if (width < 1 || height < 1) throw ConfigError("trajectory dimensions must be positive");
}

std::vector<TrajectoryPose> make_trajectory(const TrajectorySpec& spec) {
  spec.validate();
  const bool full_circle = std::abs(spec.yaw_sweep) >= 2.0 * std::numbers::pi - 1e-12;
  std::vector<TrajectoryPose> poses;
  for (int i = 0; i < spec.frames; ++i) {
    double t = 0.0;
    if (full_circle) t = static_cast<double>(i) / spec.frames;
    else if (spec.frames > 1) t = static_cast<double>(i) / (spec.frames - 1);
    TrajectoryPose p;
    p.yaw = spec.yaw_start + spec.yaw_sweep * t;
    p.pitch = spec.pitch;
    p.camera.orientation = yaw_pitch_rotation(p.yaw, p.pitch);
    p.camera.position = spec.center + spec.translation * p.camera.forward();
    p.camera.fov_x = spec.fov_x;
    p.camera.width = spec.width;
    p.camera.height = spec.height;
    p.camera.validate();
    poses.push_back(p);
  }
  return poses;
}

void aggregate_report(EvaluationReport& r) {
  aggregate_one(r.niqe, r.frames, &FrameRecord::niqe);
  aggregate_one(r.brisque, r.frames, &FrameRecord::brisque);
  aggregate_one(r.qalign, r.frames, &FrameRecord::qalign);
  aggregate_one(r.vqa, r.frames, &FrameRecord::vqa);
}

EvaluationReport evaluate_frames(const std::vector<ImageBuffer>& frames,
                                 const std::vector<TrajectoryPose>& poses, const IqaModels& models,
                                 const ExternalScorers& scorers, const std::string& prompt) {
  if (frames.size() != poses.size()) throw DomainError("evaluate_frames: one pose per frame required");
  EvaluationReport report;
  report.prompt = prompt;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    FrameRecord rec;
    rec.index = static_cast<int>(i);
    rec.position = poses[i].camera.position;
    rec.yaw = poses[i].yaw;
    rec.pitch = poses[i].pitch;
    const ImageBuffer& img = frames[i];
    if (models.niqe) score_into(rec.niqe, "niqe", rec, [&] { return niqe_score(img, *models.niqe); });
    if (models.brisque) {
      score_into(rec.brisque, "brisque", rec, [&] { return brisque_score(img, *models.brisque); });
    }
    if (scorers.qalign) score_into(rec.qalign, "qalign", rec, [&] { return scorers.qalign(img); });
    if (scorers.vqa) score_into(rec.vqa, "vqa", rec, [&] { return scorers.vqa(img, prompt); });
    report.frames.push_back(std::move(rec));
  }
  aggregate_report(report);
  return report;
}

EvaluationReport evaluate_trajectory(const SplatScene& scene, const std::vector<TrajectoryPose>& poses,
                                     const IqaModels& models, const ExternalScorers& scorers,
                                     const std::string& prompt) {
  scene.validate();
  if (models.niqe) models.niqe->validate();
  if (models.brisque) models.brisque->validate();
  std::vector<ImageBuffer> frames;
  frames.reserve(poses.size());
  for (const TrajectoryPose& p : poses) frames.push_back(render(scene, p.camera).rgb);
  return evaluate_frames(frames, poses, models, scorers, prompt);
}

nlohmann::json report_to_json(const EvaluationReport& r) {
  nlohmann::json frames = nlohmann::json::array();
  for (const FrameRecord& f : r.frames) {
    frames.push_back({{"index", f.index},
                      {"position", {f.position.x(), f.position.y(), f.position.z()}},
                      {"yaw", f.yaw},
                      {"pitch", f.pitch},
                      {"niqe", opt(f.niqe)},
                      {"brisque", opt(f.brisque)},
                      {"qalign", opt(f.qalign)},
                      {"vqa", opt(f.vqa)},
                      {"errors", f.errors}});
  }
  auto agg = [](const MetricAggregate& a) { return nlohmann::json{{"mean", opt(a.mean)}, {"count", a.count}}; };
  return {{"format", "verse3d-eval-1"},
          {"prompt", r.prompt},
          {"frames", frames},
          {"aggregate",
           {{"niqe", agg(r.niqe)}, {"brisque", agg(r.brisque)}, {"qalign", agg(r.qalign)}, {"vqa", agg(r.vqa)}}}};
}

std::string report_to_csv(const EvaluationReport& r) {
  std::ostringstream s;
  s.precision(17);
  s << "index,x,y,z,yaw,pitch,niqe,brisque,qalign,vqa\n";
  for (const FrameRecord& f : r.frames) {
    s << f.index << ',' << f.position.x() << ',' << f.position.y() << ',' << f.position.z() << ',' << f.yaw
      << ',' << f.pitch << ',' << cell(f.niqe) << ',' << cell(f.brisque) << ',' << cell(f.qalign) << ','
      << cell(f.vqa) << '\n';
  }
  return s.str();
}

}  // namespace verse3d
