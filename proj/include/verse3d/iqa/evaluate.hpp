#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "verse3d/geometry/camera.hpp"
#include "verse3d/iqa/brisque.hpp"
#include "verse3d/iqa/niqe.hpp"
#include "verse3d/splat/gaussian.hpp"

namespace verse3d {

/// Orbit/translation parameterization of an evaluation path. Frame i looks
/// along yaw_start + yaw_sweep * t_i at a fixed pitch and sits `translation`
/// units from `center` along that view direction. A full-circle sweep
/// (|yaw_sweep| >= 2 pi) uses t_i = i / frames so the first pose is not
/// repeated; otherwise t_i = i / (frames - 1).
struct TrajectorySpec {
  int frames = 6;
  double yaw_start = 0.0;
  double yaw_sweep = 6.283185307179586;
  double pitch = 0.0;
  double translation = 0.0;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double fov_x = 1.5707963267948966;
  int width = 512;
  int height = 512;

  /// Throws ConfigError for frames < 1 or an invalid resulting camera.
  void validate() const;
};

struct TrajectoryPose {
  PerspectiveCamera camera;
  double yaw = 0.0;
  double pitch = 0.0;
};

std::vector<TrajectoryPose> make_trajectory(const TrajectorySpec& spec);

/// Optional external scorers. Exceptions they throw are recorded per frame.
struct ExternalScorers {
  std::function<double(const ImageBuffer& rgb)> qalign;
  std::function<double(const ImageBuffer& rgb, const std::string& prompt)> vqa;
};

struct FrameRecord {
  int index = 0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double yaw = 0.0;
  double pitch = 0.0;
  std::optional<double> niqe;
  std::optional<double> brisque;
  std::optional<double> qalign;
  std::optional<double> vqa;
  std::vector<std::string> errors;  // "metric: message"
};

struct MetricAggregate {
  std::optional<double> mean;
  int count = 0;
};

struct EvaluationReport {
  std::string prompt;
  std::vector<FrameRecord> frames;
  MetricAggregate niqe, brisque, qalign, vqa;
};

struct IqaModels {
  const NiqeModel* niqe = nullptr;
  const BrisqueModel* brisque = nullptr;
};

/// Per-metric mean over the frames where the metric succeeded.
void aggregate_report(EvaluationReport& report);

/// Renders each pose and scores it. Frames are independent; records keep
/// trajectory order.
EvaluationReport evaluate_frames(const std::vector<ImageBuffer>& frames,
                                 const std::vector<TrajectoryPose>& poses, const IqaModels& models,
                                 const ExternalScorers& scorers, const std::string& prompt);
EvaluationReport evaluate_trajectory(const SplatScene& scene, const std::vector<TrajectoryPose>& poses,
                                     const IqaModels& models, const ExternalScorers& scorers,
                                     const std::string& prompt);

/// {"format": "verse3d-eval-1", prompt, frames: [...], aggregate: {...}};
/// missing metrics are null.
nlohmann::json report_to_json(const EvaluationReport& report);
/// Header: index,x,y,z,yaw,pitch,niqe,brisque,qalign,vqa; missing cells empty.
std::string report_to_csv(const EvaluationReport& report);

}  // namespace verse3d
