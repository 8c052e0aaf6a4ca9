#include <cmath>
#include <filesystem>
#include <limits>

#include <gtest/gtest.h>

#include "../support/convergence.hpp"
#include "verse3d/core/errors.hpp"
#include "verse3d/geometry/panorama.hpp"
#include "verse3d/optim/optimizer.hpp"
#include "verse3d/optim/training_set.hpp"

namespace verse3d {
namespace {

// Smooth color field over directions; the analytic oracle for warps.
Eigen::Vector3d field(const Eigen::Vector3d& d) {
  return {0.5 + 0.4 * d.x(), 0.5 + 0.4 * d.y(), 0.5 + 0.3 * d.z()};
}

PanoImage field_pano(int w, int h) {
  ImageBuffer img(w, h, 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Eigen::Vector3d c = field(pixel_to_ray(w, h, x, y));
      for (int k = 0; k < 3; ++k) img.at(x, y, k) = c[k];
    }
  }
  return PanoImage(std::move(img));
}

PanoImage constant_depth(int w, int h, double r) { return PanoImage(ImageBuffer(w, h, 1, r)); }

TEST(Perturbation, BoundsAndMeanOverManyDraws) {
  for (double lambda : {1.0, 2.0, 4.0}) {
    Rng rng(static_cast<std::uint64_t>(lambda * 17));
    const int n = 100000;
    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
      const Eigen::Vector3d o = perturbation_offset(lambda, rng);
      worst = std::max(worst, o.cwiseAbs().maxCoeff());
      sum += o;
    }
    EXPECT_LE(worst, 0.05 * lambda);
    // Uniform on [-a, a] has standard deviation a / sqrt(3).
    const double se = 0.05 * lambda / std::sqrt(3.0) / std::sqrt(static_cast<double>(n));
    for (int k = 0; k < 3; ++k) EXPECT_LE(std::abs(sum[k] / n), 3.0 * se);
  }
}

TEST(Perturbation, KeepsOrientationAndIntrinsics) {
  PerspectiveCamera base;
  base.orientation = look_rotation({1.0, 2.0, 3.0});
  base.fov_x = 1.2;
  base.position = {1.0, -2.0, 0.5};
  Rng rng(3);
  const PerspectiveCamera cam = perturb_camera(base, 4.0, rng);
  EXPECT_TRUE(cam.orientation.coeffs() == base.orientation.coeffs());
  EXPECT_EQ(cam.fov_x, base.fov_x);
  EXPECT_EQ(cam.width, base.width);
  EXPECT_LE((cam.position - base.position).cwiseAbs().maxCoeff(), 0.2);
  EXPECT_GT((cam.position - base.position).norm(), 0.0);
  EXPECT_THROW(perturb_camera(base, 0.0, rng), DomainError);
}

TEST(Perturbation, ConfigValidation) {
  PerturbationConfig c;
  EXPECT_NO_THROW(c.validate());
  c.lambdas = {1.0, 4.0, 2.0};
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.base_range = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(TrainingSet, CountsAndStageLabels) {
  const PanoImage pano = field_pano(128, 64);
  const PanoImage depth = constant_depth(128, 64, 5.0);
  const auto tangents = tangent_cameras(kTangentCount, kDefaultTangentFov, 32);
  PerturbationConfig cfg;
  EXPECT_EQ(build_training_set(pano, depth, tangents, cfg).size(), 20u);
  cfg.views_per_stage = 10;
  const auto views = build_training_set(pano, depth, tangents, cfg);
  ASSERT_EQ(views.size(), 50u);
  for (int i = 0; i < 50; ++i) {
    const int expected_stage = i < 20 ? 0 : 1 + (i - 20) / 10;
    EXPECT_EQ(views[i].stage, expected_stage);
    EXPECT_EQ(views[i].lambda, expected_stage == 0 ? 0.0 : cfg.lambdas[expected_stage - 1]);
    EXPECT_EQ(views[i].target.width(), views[i].camera.width);
  }
  EXPECT_EQ(views[0].target, project_pano_to_view(pano, tangents[0]));
}

TEST(TrainingSet, FixedSeedIsBitIdentical) {
  const PanoImage pano = field_pano(128, 64);
  const PanoImage depth = constant_depth(128, 64, 5.0);
  const auto tangents = tangent_cameras(kTangentCount, kDefaultTangentFov, 32);
  PerturbationConfig cfg;
  cfg.views_per_stage = 4;
  cfg.seed = 99;
  EXPECT_EQ(build_training_set(pano, depth, tangents, cfg), build_training_set(pano, depth, tangents, cfg));
  PerturbationConfig other = cfg;
  other.seed = 100;
  EXPECT_NE(build_training_set(pano, depth, tangents, cfg)[25].camera.position,
            build_training_set(pano, depth, tangents, other)[25].camera.position);
}

TEST(Warp, ConstantPanoramaStaysConstant) {
  const PanoImage pano(ImageBuffer(128, 64, 3, 0.25));
  PerspectiveCamera cam;
  cam.position = {0.1, -0.05, 0.2};
  cam.width = cam.height = 48;
  const ImageBuffer out = warp_panorama(pano, constant_depth(128, 64, 3.0), cam);
  for (double v : out.data()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Warp, MatchesSphereParallaxOracle) {
  // Depth R everywhere: the scene is a sphere of radius R around the origin.
  // A translated camera must see, through each pixel, the field value at the
  // sphere point its ray hits.
  const int w = 1024, h = 512;
  const double r = 4.0;
  const PanoImage pano = field_pano(w, h);
  PerspectiveCamera cam;
  cam.position = {0.15, 0.1, -0.2};
  cam.orientation = look_rotation({0.3, 0.1, 1.0});
  cam.fov_x = 1.2;
  cam.width = cam.height = 64;
  const ImageBuffer out = warp_panorama(pano, constant_depth(w, h, r), cam);
  double worst = 0.0;
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const Eigen::Vector3d d = cam.ray_direction(x + 0.5, y + 0.5);
      const double b = cam.position.dot(d);
      const double t = -b + std::sqrt(b * b - cam.position.squaredNorm() + r * r);
      const Eigen::Vector3d expect = field((cam.position + t * d).normalized());
      for (int k = 0; k < 3; ++k) worst = std::max(worst, std::abs(out.at(x, y, k) - expect[k]));
    }
  }
  // Nearest-sample splatting: error bounded by the field slope times about
  // one view pixel of angle (fov / width ~ 0.019 rad).
  EXPECT_LT(worst, 0.4 * 0.03);
}

TEST(Warp, NearSurfaceOccludesFar) {
  const int w = 256, h = 128;
  ImageBuffer color(w, h, 3, 0.0);
  ImageBuffer depth(w, h, 1, 10.0);
  // Front face region (near +Z) painted white at depth 2; the rest is black at 10.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (pixel_to_ray(w, h, x, y).z() > 0.95) {
        for (int k = 0; k < 3; ++k) color.at(x, y, k) = 1.0;
        depth.at(x, y) = 2.0;
      }
    }
  }
  PerspectiveCamera cam;
  cam.position = {0.3, 0.0, 0.0};
  cam.width = cam.height = 32;
  cam.fov_x = 0.2;
  const ImageBuffer out = warp_panorama(PanoImage(color), PanoImage(depth), cam);
  EXPECT_DOUBLE_EQ(out.at(16, 16, 0), 1.0);
}

TEST(Optimize, ZeroIterationsReturnsInput) {
  const auto p = testing::convergence_problem(11, 8, 2, 32);
  TrainConfig cfg;
  cfg.iterations = 0;
  const OptimizeResult r = optimize(p.start, p.views, cfg);
  EXPECT_EQ(r.scene, p.start);
  EXPECT_TRUE(r.state.loss_history.empty());
}

TEST(Optimize, DeterministicCountPreservingAndUnitQuaternions) {
  const auto p = testing::convergence_problem(12, 12, 4, 32);
  TrainConfig cfg;
  cfg.iterations = 40;
  cfg.seed = 5;
  const OptimizeResult a = optimize(p.start, p.views, cfg);
  const OptimizeResult b = optimize(p.start, p.views, cfg);
  EXPECT_EQ(a.state.loss_history, b.state.loss_history);
  EXPECT_EQ(a.scene, b.scene);
  ASSERT_EQ(a.scene.gaussians.size(), p.start.gaussians.size());
  for (const Gaussian3D& g : a.scene.gaussians) EXPECT_NEAR(g.rotation.norm(), 1.0, 1e-12);
  EXPECT_EQ(a.state.iteration, 40);
  EXPECT_NE(a.scene, p.start);
}

TEST(Optimize, ConvergesOnPerturbedCopy) {
  const auto p = testing::convergence_problem(1);
  TrainConfig cfg;
  cfg.iterations = 500;
  cfg.lr.position = 1.6e-3;
  cfg.seed = 7;
  const OptimizeResult r = optimize(p.start, p.views, cfg);
  double initial = 0.0, final = 0.0;
  for (const TrainView& v : p.views) {
    initial += image_loss(render(p.start, v.camera).rgb, v.target).value;
    final += image_loss(render(r.scene, v.camera).rgb, v.target).value;
  }
  EXPECT_LT(final, 0.1 * initial);
  EXPECT_GE(psnr(render_as<double>(r.scene, p.held_out).rgb, render_as<double>(p.truth, p.held_out).rgb),
            30.0);
}

TEST(Optimize, CurriculumEnablesStagesAtThirds) {
  std::vector<TrainView> views(4);
  for (int i = 0; i < 4; ++i) views[i].stage = i;
  EXPECT_EQ(active_views(views, 0, 90), (std::vector<int>{0, 1}));
  EXPECT_EQ(active_views(views, 29, 90), (std::vector<int>{0, 1}));
  EXPECT_EQ(active_views(views, 30, 90), (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(active_views(views, 60, 90), (std::vector<int>{0, 1, 2, 3}));
}

TEST(Optimize, EarlyStopOnPlateau) {
  // Training against its own renders: loss is 0 from the start.
  auto p = testing::convergence_problem(13, 6, 2, 32);
  for (TrainView& v : p.views) v.target = render(p.start, v.camera).rgb;
  TrainConfig cfg;
  cfg.iterations = 500;
  cfg.early_stop = true;
  cfg.early_stop_window = 10;
  const OptimizeResult r = optimize(p.start, p.views, cfg);
  ASSERT_TRUE(r.early_stopped);
  const auto& h = r.state.loss_history;
  ASSERT_GE(h.size(), 20u);
  EXPECT_LT(h.size(), 500u);
  double prev = 0.0, cur = 0.0;
  for (std::size_t i = h.size() - 20; i < h.size() - 10; ++i) prev += h[i] / 10.0;
  for (std::size_t i = h.size() - 10; i < h.size(); ++i) cur += h[i] / 10.0;
  EXPECT_LT(prev - cur, 1e-3 * prev);
}

TEST(Optimize, NonFiniteLossIsDivergence) {
  auto p = testing::convergence_problem(14, 4, 1, 32);
  p.views[0].target.at(3, 3, 0) = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg;
  cfg.iterations = 3;
  EXPECT_THROW(optimize(p.start, p.views, cfg), DivergenceError);
}

TEST(Optimize, RejectsBadInputs) {
  const auto p = testing::convergence_problem(15, 4, 1, 32);
  TrainConfig cfg;
  EXPECT_THROW(optimize(p.start, {}, cfg), DomainError);
  cfg.lr.sh = 0.0;
  EXPECT_THROW(optimize(p.start, p.views, cfg), ConfigError);
  cfg = {};
  cfg.ssim_weight = 2.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Checkpoint, ResumeWithMomentsReplaysUninterruptedRun) {
  const auto p = testing::convergence_problem(16, 10, 3, 32);
  TrainConfig cfg;
  cfg.iterations = 30;
  cfg.seed = 9;
  const OptimizeResult full = optimize(p.start, p.views, cfg);

  TrainConfig first = cfg;
  first.stop_at_iteration = 12;
  const OptimizeResult a = optimize(p.start, p.views, first);
  ASSERT_EQ(a.state.iteration, 12);
  const auto dir = std::filesystem::temp_directory_path() / "verse3d_ckpt_test";
  std::filesystem::remove_all(dir);
  const std::string stem = (dir / "step").string();
  save_checkpoint(stem, a.scene, a.state, true);
  const Checkpoint c = load_checkpoint(stem);
  EXPECT_EQ(c.scene, a.scene);
  EXPECT_EQ(c.state, a.state);
  const OptimizeResult b = optimize(c.scene, p.views, cfg, &c.state);
  EXPECT_EQ(b.scene, full.scene);
  EXPECT_EQ(b.state.loss_history, full.state.loss_history);

  save_checkpoint(stem, a.scene, a.state, false);
  EXPECT_FALSE(load_checkpoint(stem).state.has_moments());
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace verse3d
