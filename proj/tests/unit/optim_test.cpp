#include <cmath>

#include <gtest/gtest.h>

#include "../support/finite_difference.hpp"
#include "../support/random_scene.hpp"
#include "verse3d/core/errors.hpp"
#include "verse3d/optim/backward.hpp"
#include "verse3d/optim/loss.hpp"

namespace verse3d {
namespace {

ImageBuffer random_image(Rng& rng, int w, int h) {
  ImageBuffer img(w, h, 3);
  for (double& v : img.data()) v = rng.uniform();
  return img;
}

TEST(Loss, IdenticalImagesGiveZero) {
  Rng rng(1);
  const ImageBuffer a = random_image(rng, 16, 12);
  EXPECT_EQ(image_loss(a, a).value, 0.0);
  EXPECT_EQ(image_loss(a, a, 0.0).value, 0.0);
}

TEST(Loss, ConstantOffsetL1) {
  Rng rng(2);
  const ImageBuffer a = random_image(rng, 8, 8);
  ImageBuffer b = a;
  for (double& v : b.data()) v += 0.1;
  EXPECT_NEAR(image_loss(a, b, 0.0).value, 0.1, 1e-12);
}

TEST(Loss, RejectsMismatch) {
  EXPECT_THROW(image_loss(ImageBuffer(4, 4, 3), ImageBuffer(4, 5, 3)), DomainError);
  EXPECT_THROW(image_loss(ImageBuffer(4, 4, 3), ImageBuffer(4, 4, 3), 1.5), DomainError);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  Rng rng(3);
  const ImageBuffer r = random_image(rng, 8, 8);
  const ImageBuffer t = random_image(rng, 8, 8);
  for (double w : {0.0, 0.2, 1.0}) {
    const LossValue lv = image_loss(r, t, w);
    double worst = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < r.data().size(); ++i) {
      ImageBuffer p = r, m = r;
      p.data()[i] += 1e-6;
      m.data()[i] -= 1e-6;
      const double fd = (image_loss(p, t, w).value - image_loss(m, t, w).value) / 2e-6;
      worst = std::max(worst, std::abs(fd - lv.gradient.data()[i]));
      scale = std::max(scale, std::abs(fd));
    }
    EXPECT_LT(worst / scale, 1e-5) << "w=" << w;
  }
}

TEST(Backward, SingleGaussianFiniteDifferences) {
  Rng rng(4);
  const PerspectiveCamera cam = testing::test_camera(32, 1.0);
  for (int trial = 0; trial < 3; ++trial) {
    const SplatScene scene = testing::probe_scene(rng);
    const ImageBuffer target = testing::offset_target(render_as<double>(scene, cam).rgb, rng);
    for (const auto& e : testing::check_gradients(scene, cam, target, 0.2, 0)) {
      EXPECT_LT(e.relative_error, 1e-3) << e.name << " trial " << trial;
    }
  }
}

TEST(Backward, OccludedGaussiansFiniteDifferences) {
  Rng rng(5);
  const PerspectiveCamera cam = testing::test_camera(32, 1.0);
  SplatScene scene = testing::probe_scene(rng);
  SplatScene second = testing::probe_scene(rng);
  second.gaussians[0].position.z() += 1.5;
  scene.gaussians.push_back(second.gaussians[0]);
  const ImageBuffer target = testing::offset_target(render_as<double>(scene, cam).rgb, rng);
  for (std::size_t idx : {0u, 1u}) {
    for (const auto& e : testing::check_gradients(scene, cam, target, 0.2, idx)) {
      EXPECT_LT(e.relative_error, 1e-3) << e.name << " gaussian " << idx;
    }
  }
}

TEST(Backward, ZeroAtOwnRender) {
  Rng rng(6);
  const SplatScene scene = testing::random_scene(rng, 16);
  const PerspectiveCamera cam = testing::test_camera(32, 1.0);
  const BackwardResult r = backward<double>(scene, cam, render_as<double>(scene, cam).rgb, 0.2);
  EXPECT_EQ(r.loss, 0.0);
  for (const auto& g : r.grads) {
    // SSIM's gradient at its maximum vanishes up to rounding.
    EXPECT_NEAR(g.position.norm(), 0.0, 1e-12);
    EXPECT_NEAR(g.log_scale.norm(), 0.0, 1e-12);
    EXPECT_NEAR(g.opacity_logit, 0.0, 1e-12);
  }
}

TEST(Backward, CulledGaussianGetsZero) {
  Rng rng(7);
  SplatScene scene = testing::probe_scene(rng);
  Gaussian3D far = scene.gaussians[0];
  far.position = {0, 0, -10};
  scene.gaussians.push_back(far);
  const PerspectiveCamera cam = testing::test_camera(32, 1.0);
  const ImageBuffer target = testing::offset_target(render_as<double>(scene, cam).rgb, rng);
  const BackwardResult r = backward<double>(scene, cam, target, 0.2);
  EXPECT_GT(r.grads[0].position.norm(), 0.0);
  EXPECT_EQ(r.grads[1].position.norm(), 0.0);
  EXPECT_EQ(r.grads[1].opacity_logit, 0.0);
}

TEST(Backward, FloatPathAgreesWithDouble) {
  Rng rng(8);
  const SplatScene scene = testing::random_scene(rng, 32);
  const PerspectiveCamera cam = testing::test_camera(48, 1.0);
  const ImageBuffer target = testing::offset_target(render_as<double>(scene, cam).rgb, rng);
  const BackwardResult d = backward<double>(scene, cam, target, 0.2);
  const BackwardResult f = backward<float>(scene, cam, target, 0.2);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < d.grads.size(); ++i) {
    num += (d.grads[i].position - f.grads[i].position).squaredNorm();
    den += d.grads[i].position.squaredNorm();
  }
  EXPECT_LT(std::sqrt(num / den), 1e-2);
}

}  // namespace
}  // namespace verse3d
