#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "verse3d/optim/loss.hpp"
#include "verse3d/optim/training_set.hpp"
#include "verse3d/splat/gaussian.hpp"

namespace verse3d {

struct LearningRates {
  double position = 1.6e-4;
  double position_final_factor = 0.01;  // exponential decay to this fraction
  double sh = 2.5e-3;
  double opacity = 5e-2;
  double scale = 5e-3;
  double rotation = 1e-3;
};

struct TrainConfig {
  int iterations = 3000;
  LearningRates lr;
  /// Multiplies the position rate. 0 selects the median distance from the
  /// mean training camera to the gaussians.
  double position_lr_scale = 0.0;
  double ssim_weight = kDefaultSsimWeight;
  /// When > 0, return after this many completed iterations without changing
  /// the schedule (used for periodic checkpoints).
  int stop_at_iteration = 0;
  int batch_size = 1;
  std::uint64_t seed = 0;
  bool early_stop = false;
  int early_stop_window = 100;
  double early_stop_tolerance = 1e-3;
  bool double_precision = false;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-15;

  /// Throws ConfigError naming the offending field. iterations = 0 is allowed
  /// and means "return the input unchanged".
  void validate() const;
};

/// Number of optimizer scalars per gaussian (position, opacity, all SH slots,
/// log-scale, quaternion).
inline constexpr int kParamsPerGaussian = 3 + 1 + 3 * kMaxShCoeffs + 3 + 4;

struct TrainState {
  int iteration = 0;  // completed iterations
  std::uint64_t seed = 0;
  double position_lr_scale = 0.0;  // resolved value
  std::vector<double> loss_history;
  /// Adam moments, kParamsPerGaussian per gaussian; empty when not kept.
  std::vector<double> first_moment;
  std::vector<double> second_moment;

  bool has_moments() const { return !first_moment.empty(); }
  bool operator==(const TrainState&) const = default;
};

struct OptimizeResult {
  SplatScene scene;
  TrainState state;
  bool early_stopped = false;
};

/// Called after each iteration with (iteration index, batch loss).
using ProgressFn = std::function<void(int, double)>;

/// View indices active at an iteration under the curriculum: tangent views
/// always, lambda stage s (1-based, of L stages) from iteration (s-1)*N/L.
std::vector<int> active_views(const std::vector<TrainView>& views, int iteration, int total_iterations);

/// Adam on every gaussian parameter with per-group rates; quaternions are
/// renormalized after each step and the gaussian count never changes. View
/// choice depends only on (seed, iteration), so a run resumed from a state
/// that kept its moments replays the uninterrupted run exactly.
///
/// Runs until state.iteration == cfg.iterations (or early stop). Throws
/// DivergenceError when the loss or any parameter becomes non-finite.
OptimizeResult optimize(const SplatScene& scene, const std::vector<TrainView>& views,
                        const TrainConfig& cfg, const TrainState* resume = nullptr,
                        const ProgressFn& progress = {});

/// Writes `<stem>.ply` (+ its scene sidecar) and `<stem>.train.json`.
void save_checkpoint(const std::string& stem, const SplatScene& scene, const TrainState& state,
                     bool include_moments);

struct Checkpoint {
  SplatScene scene;
  TrainState state;
};
Checkpoint load_checkpoint(const std::string& stem);

}  // namespace verse3d
