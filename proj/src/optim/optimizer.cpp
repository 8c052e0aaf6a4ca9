#include "verse3d/optim/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <nlohmann/json.hpp>

#include "verse3d/core/errors.hpp"
#include "verse3d/core/hash.hpp"
#include "verse3d/core/image_io.hpp"
#include "verse3d/optim/backward.hpp"
#include "verse3d/splat/scene_io.hpp"

namespace verse3d {

namespace {

constexpr const char* kTrainStateFormat = "verse3d-train-state-1";

enum Group { kPosition, kOpacity, kSh, kScale, kRotation };

// Flat layout of one gaussian's parameters: offsets into a
// kParamsPerGaussian block.
constexpr int kOffPosition = 0;
constexpr int kOffOpacity = 3;
constexpr int kOffSh = 4;
constexpr int kOffScale = kOffSh + 3 * kMaxShCoeffs;
constexpr int kOffRotation = kOffScale + 3;
static_assert(kOffRotation + 4 == kParamsPerGaussian);

void pack(const Gaussian3D& g, double* p) {
  for (int k = 0; k < 3; ++k) p[kOffPosition + k] = g.position[k];
  p[kOffOpacity] = g.opacity_logit;
  std::copy(g.sh.begin(), g.sh.end(), p + kOffSh);
  for (int k = 0; k < 3; ++k) p[kOffScale + k] = g.log_scale[k];
  for (int k = 0; k < 4; ++k) p[kOffRotation + k] = g.rotation[k];
}

void pack(const GaussianGrad& g, double* p) {
  for (int k = 0; k < 3; ++k) p[kOffPosition + k] = g.position[k];
  p[kOffOpacity] = g.opacity_logit;
  std::copy(g.sh.begin(), g.sh.end(), p + kOffSh);
  for (int k = 0; k < 3; ++k) p[kOffScale + k] = g.log_scale[k];
  for (int k = 0; k < 4; ++k) p[kOffRotation + k] = g.rotation[k];
}

void unpack(const double* p, Gaussian3D& g) {
  for (int k = 0; k < 3; ++k) g.position[k] = p[kOffPosition + k];
  g.opacity_logit = p[kOffOpacity];
  std::copy(p + kOffSh, p + kOffSh + 3 * kMaxShCoeffs, g.sh.begin());
  for (int k = 0; k < 3; ++k) g.log_scale[k] = p[kOffScale + k];
  for (int k = 0; k < 4; ++k) g.rotation[k] = p[kOffRotation + k];
}

Group group_of(int offset) {
  if (offset < kOffOpacity) return kPosition;
  if (offset < kOffSh) return kOpacity;
  if (offset < kOffScale) return kSh;
  if (offset < kOffRotation) return kScale;
  return kRotation;
}

double resolve_position_scale(const SplatScene& scene, const std::vector<TrainView>& views,
                              double configured) {
  if (configured > 0.0) return configured;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  for (const TrainView& v : views) center += v.camera.position;
  center /= static_cast<double>(views.size());
  std::vector<double> d;
  d.reserve(scene.gaussians.size());
  for (const Gaussian3D& g : scene.gaussians) d.push_back((g.position - center).norm());
  if (d.empty()) return 1.0;
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid > 0.0 ? *mid : 1.0;
}

double mean_of(const std::vector<double>& h, std::size_t begin, std::size_t end) {
  return std::accumulate(h.begin() + static_cast<std::ptrdiff_t>(begin),
                         h.begin() + static_cast<std::ptrdiff_t>(end), 0.0) /
         static_cast<double>(end - begin);
}

}  // namespace

void TrainConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be > 0");
  };
  if (iterations < 0) throw ConfigError("train.iterations must be >= 0");
  positive(lr.position, "train.lr.position");
  positive(lr.sh, "train.lr.sh");
  positive(lr.opacity, "train.lr.opacity");
  positive(lr.scale, "train.lr.scale");
  positive(lr.rotation, "train.lr.rotation");
  if (!(lr.position_final_factor > 0.0 && lr.position_final_factor <= 1.0)) {
    throw ConfigError("train.lr.position_final_factor must lie in (0, 1]");
  }
  if (!(position_lr_scale >= 0.0)) throw ConfigError("train.position_lr_scale must be >= 0");
  if (!(ssim_weight >= 0.0 && ssim_weight <= 1.0)) throw ConfigError("train.ssim_weight must lie in [0, 1]");
  if (stop_at_iteration < 0) throw ConfigError("train.stop_at_iteration must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (early_stop_window < 1) throw ConfigError("train.early_stop_window must be >= 1");
  if (!(early_stop_tolerance >= 0.0)) throw ConfigError("train.early_stop_tolerance must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("train.adam_beta1 must lie in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("train.adam_beta2 must lie in [0, 1)");
  positive(adam_epsilon, "train.adam_epsilon");
}

std::vector<int> active_views(const std::vector<TrainView>& views, int iteration, int total_iterations) {
  int stages = 0;
  for (const TrainView& v : views) stages = std::max(stages, v.stage);
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(views.size()); ++i) {
    const int s = views[i].stage;
    if (s == kTangentStage) {
      out.push_back(i);
      continue;
    }
    const long long start = static_cast<long long>(s - 1) * total_iterations / stages;
    if (iteration >= start) out.push_back(i);
  }
  return out;
}

OptimizeResult optimize(const SplatScene& scene, const std::vector<TrainView>& views,
                        const TrainConfig& cfg, const TrainState* resume, const ProgressFn& progress) {
  cfg.validate();
  scene.validate();
  if (views.empty()) throw DomainError("optimize: no training views");
  for (const TrainView& v : views) {
    v.camera.validate();
    if (v.target.width() != v.camera.width || v.target.height() != v.camera.height ||
        v.target.channels() != 3) {
      throw DomainError("optimize: target dims do not match camera dims");
    }
  }
  const std::size_t n = scene.gaussians.size();
  const std::size_t nparams = n * kParamsPerGaussian;

  OptimizeResult result;
  result.scene = scene;
  TrainState& st = result.state;
  if (resume != nullptr) {
    st = *resume;
    if (st.has_moments() &&
        (st.first_moment.size() != nparams || st.second_moment.size() != nparams)) {
      throw DomainError("optimize: resume moments do not match the scene size");
    }
  } else {
    st.seed = cfg.seed;
    st.position_lr_scale = resolve_position_scale(scene, views, cfg.position_lr_scale);
  }
  if (st.iteration >= cfg.iterations) return result;
  if (!st.has_moments()) {
    st.first_moment.assign(nparams, 0.0);
    st.second_moment.assign(nparams, 0.0);
  }

  std::vector<double> params(nparams);
  for (std::size_t i = 0; i < n; ++i) pack(scene.gaussians[i], &params[i * kParamsPerGaussian]);
  std::vector<double> grad(nparams);
  std::vector<double> block(kParamsPerGaussian);

  const double pos_lr0 = cfg.lr.position * st.position_lr_scale;
  const int end = cfg.stop_at_iteration > 0 ? std::min(cfg.stop_at_iteration, cfg.iterations) : cfg.iterations;
  for (int it = st.iteration; it < end; ++it) {
    const std::vector<int> active = active_views(views, it, cfg.iterations);
    std::fill(grad.begin(), grad.end(), 0.0);
    double batch_loss = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const std::uint64_t draw =
          hash_combine(st.seed, static_cast<std::uint64_t>(it) * cfg.batch_size + b);
      const int vi = active[draw % active.size()];
      const TrainView& view = views[vi];
      const BackwardResult br =
          cfg.double_precision ? backward<double>(result.scene, view.camera, view.target, cfg.ssim_weight)
                               : backward<float>(result.scene, view.camera, view.target, cfg.ssim_weight);
      if (!std::isfinite(br.loss)) {
        throw DivergenceError("optimize: non-finite loss at iteration " + std::to_string(it) +
                              " on view " + std::to_string(vi));
      }
      batch_loss += br.loss;
      for (std::size_t i = 0; i < n; ++i) {
        pack(br.grads[i], block.data());
        double* g = &grad[i * kParamsPerGaussian];
        for (int k = 0; k < kParamsPerGaussian; ++k) g[k] += block[k];
      }
    }
    const double inv_batch = 1.0 / cfg.batch_size;
    batch_loss *= inv_batch;

    const double t = cfg.iterations > 1 ? static_cast<double>(it) / (cfg.iterations - 1) : 0.0;
    const double rates[5] = {pos_lr0 * std::pow(cfg.lr.position_final_factor, t), cfg.lr.opacity,
                             cfg.lr.sh, cfg.lr.scale, cfg.lr.rotation};
    const int step = it + 1;
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, step);
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, step);
    for (std::size_t i = 0; i < nparams; ++i) {
      const double g = grad[i] * inv_batch;
      double& m = st.first_moment[i];
      double& v = st.second_moment[i];
      m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * g;
      v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * g * g;
      const double lr = rates[group_of(static_cast<int>(i % kParamsPerGaussian))];
      params[i] -= lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.adam_epsilon);
    }
    for (std::size_t i = 0; i < n; ++i) {
      double* p = &params[i * kParamsPerGaussian];
      double* q = p + kOffRotation;
      const double qn = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
      if (!(qn > 0.0) || !std::isfinite(qn)) {
        throw DivergenceError("optimize: degenerate quaternion at iteration " + std::to_string(it));
      }
      for (int k = 0; k < 4; ++k) q[k] /= qn;
      for (int k = 0; k < kParamsPerGaussian; ++k) {
        if (!std::isfinite(p[k])) {
          throw DivergenceError("optimize: non-finite parameter at iteration " + std::to_string(it));
        }
      }
      unpack(p, result.scene.gaussians[i]);
    }

    st.iteration = step;
    st.loss_history.push_back(batch_loss);
    if (progress) progress(it, batch_loss);

    const std::size_t w = static_cast<std::size_t>(cfg.early_stop_window);
    const std::vector<double>& h = st.loss_history;
    if (cfg.early_stop && h.size() >= 2 * w) {
      const double prev = mean_of(h, h.size() - 2 * w, h.size() - w);
      const double cur = mean_of(h, h.size() - w, h.size());
      if (prev - cur < cfg.early_stop_tolerance * prev) {
        result.early_stopped = true;
        break;
      }
    }
  }
  return result;
}

void save_checkpoint(const std::string& stem, const SplatScene& scene, const TrainState& state,
                     bool include_moments) {
  save_scene(stem + ".ply", scene);
  nlohmann::json j;
  j["format"] = kTrainStateFormat;
  j["iteration"] = state.iteration;
  j["seed"] = state.seed;
  j["position_lr_scale"] = state.position_lr_scale;
  j["loss_history"] = state.loss_history;
  j["moments_included"] = include_moments && state.has_moments();
  if (include_moments && state.has_moments()) {
    j["first_moment"] = state.first_moment;
    j["second_moment"] = state.second_moment;
  }
  write_file(stem + ".train.json", j.dump(1));
}

Checkpoint load_checkpoint(const std::string& stem) {
  Checkpoint c;
  c.scene = load_scene(stem + ".ply");
  const std::string text = read_file(stem + ".train.json");
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    if (j.at("format").get<std::string>() != kTrainStateFormat) {
      throw ParseError("checkpoint: unknown train-state format");
    }
    c.state.iteration = j.at("iteration").get<int>();
    c.state.seed = j.at("seed").get<std::uint64_t>();
    c.state.position_lr_scale = j.at("position_lr_scale").get<double>();
    c.state.loss_history = j.at("loss_history").get<std::vector<double>>();
    if (j.at("moments_included").get<bool>()) {
      c.state.first_moment = j.at("first_moment").get<std::vector<double>>();
      c.state.second_moment = j.at("second_moment").get<std::vector<double>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: malformed train state: ") + e.what());
  }
  return c;
}

}  // namespace verse3d
