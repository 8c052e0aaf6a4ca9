#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "../support/random_scene.hpp"
#include "../support/reference_renderer.hpp"
#include "verse3d/core/errors.hpp"
#include "verse3d/splat/gaussian.hpp"
#include "verse3d/splat/init.hpp"
#include "verse3d/splat/render.hpp"
#include "verse3d/splat/scene_io.hpp"

namespace verse3d {
namespace {

using testing::random_scene;
using testing::test_camera;

constexpr double kPi = std::numbers::pi;

// Real SH with the Condon-Shortley phase from associated Legendre functions;
// std::assoc_legendre omits the phase so it is applied here.
double legendre_sh(int l, int m, const Eigen::Vector3d& d) {
  const int am = std::abs(m);
  const double theta = std::acos(std::clamp(d.z(), -1.0, 1.0));
  const double phi = std::atan2(d.y(), d.x());
  double fact = 1.0;
  for (int i = l - am + 1; i <= l + am; ++i) fact *= i;
  const double k = std::sqrt((2 * l + 1) / (4 * kPi) / fact);
  const double p = (am % 2 ? -1.0 : 1.0) * std::assoc_legendre(l, am, std::cos(theta));
  if (m == 0) return k * p;
  if (m > 0) return std::sqrt(2.0) * k * std::cos(m * phi) * p;
  return std::sqrt(2.0) * k * std::sin(am * phi) * p;
}

Eigen::Vector3d random_unit(Rng& rng) {
  return Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()).normalized();
}

TEST(Covariance, IdentityAndAxisPermutation) {
  Gaussian3D g;
  EXPECT_TRUE(covariance3d(g).isApprox(Eigen::Matrix3d::Identity(), 1e-15));
  g.log_scale = {std::log(2.0), 0.0, 0.0};
  const double h = std::sqrt(0.5);
  g.rotation = {h, 0.0, 0.0, h};  // 90 degrees about z
  const Eigen::Matrix3d sigma = covariance3d(g);
  EXPECT_NEAR((sigma - Eigen::Vector3d(1, 4, 1).asDiagonal().toDenseMatrix()).norm(), 0.0, 1e-12);
}

TEST(Covariance, EigenvaluesAreSquaredScales) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Gaussian3D g;
    g.rotation = Eigen::Vector4d(rng.normal(), rng.normal(), rng.normal(), rng.normal()) * 3.0;
    g.log_scale = {rng.normal(), rng.normal(), rng.normal()};
    const Eigen::Matrix3d sigma = covariance3d(g);
    EXPECT_NEAR((sigma - sigma.transpose()).norm(), 0.0, 1e-12);
    Eigen::Vector3d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(sigma).eigenvalues();
    Eigen::Vector3d expect = (2.0 * g.log_scale).array().exp();
    std::sort(expect.data(), expect.data() + 3);
    EXPECT_NEAR((ev - expect).norm() / expect.norm(), 0.0, 1e-10);
    EXPECT_GE(ev.minCoeff(), 0.0);
  }
}

TEST(Sh, DcIsIsotropic) {
  std::array<double, 48> sh{};
  const Eigen::Vector3d rgb(0.2, 0.4, 0.6);
  for (int c = 0; c < 3; ++c) sh[c] = (rgb[c] - 0.5) / kShC0;
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    const Eigen::Vector3d d = random_unit(rng);
    EXPECT_NEAR((sh_to_color(sh, d, 0) - rgb).norm(), 0.0, 1e-15);
    EXPECT_NEAR((sh_to_color(sh, d, 1) - rgb).norm(), 0.0, 1e-15);
  }
}

TEST(Sh, MatchesLegendreOracle) {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const Eigen::Vector3d d = random_unit(rng);
    double basis[16];
    sh_basis<double>(3, d.data(), basis);
    for (int l = 0; l <= 3; ++l) {
      for (int m = -l; m <= l; ++m) {
        EXPECT_NEAR(basis[l * l + l + m], legendre_sh(l, m, d), 1e-10) << "l=" << l << " m=" << m;
      }
    }
  }
}

TEST(Sh, Degree2ColorMatchesOracleSum) {
  Rng rng(4);
  std::array<double, 48> sh{};
  for (int k = 0; k < 27; ++k) sh[k] = rng.normal(0.0, 0.1);
  for (int i = 0; i < 100; ++i) {
    const Eigen::Vector3d d = random_unit(rng);
    const Eigen::Vector3d rgb = sh_to_color(sh, d, 2);
    for (int c = 0; c < 3; ++c) {
      double v = 0.5;
      for (int l = 0; l <= 2; ++l) {
        for (int m = -l; m <= l; ++m) v += legendre_sh(l, m, d) * sh[(l * l + l + m) * 3 + c];
      }
      EXPECT_NEAR(rgb[c], std::clamp(v, 0.0, 1.0), 1e-10);
    }
  }
}

TEST(Sh, JacobianMatchesFiniteDifferences) {
  Rng rng(8);
  const Eigen::Vector3d d = random_unit(rng);
  double v[16], jac[48];
  sh_basis_with_jacobian(3, d, v, jac);
  for (int j = 0; j < 3; ++j) {
    Eigen::Vector3d dp = d, dm = d;
    dp[j] += 1e-6;
    dm[j] -= 1e-6;
    double bp[16], bm[16];
    sh_basis<double>(3, dp.data(), bp);
    sh_basis<double>(3, dm.data(), bm);
    for (int k = 0; k < 16; ++k) EXPECT_NEAR(jac[k * 3 + j], (bp[k] - bm[k]) / 2e-6, 1e-8);
  }
}

TEST(Project, OnAxisMapsToCenterAndIsotropicFootprint) {
  const PerspectiveCamera cam = test_camera(64, 1.0);
  const auto frame = CameraFrame<double>::make(cam);
  Gaussian3D g;
  const double d = 5.0, s = 0.05;
  g.position = {0, 0, d};
  g.log_scale = Eigen::Vector3d::Constant(std::log(s));
  const auto p = project_gaussian(g, 0, frame);
  ASSERT_TRUE(p);
  EXPECT_NEAR(p->mean_x, 32.0, 1e-12);
  EXPECT_NEAR(p->mean_y, 32.0, 1e-12);
  const double expect = std::pow(cam.focal() * s / d, 2) + kCovarianceFloor;
  EXPECT_NEAR(p->cov_xx, expect, 1e-12);
  EXPECT_NEAR(p->cov_yy, expect, 1e-12);
  EXPECT_NEAR(p->cov_xy, 0.0, 1e-12);
}

TEST(Project, BehindCameraAndFarOffscreenAreCulled) {
  const auto frame = CameraFrame<double>::make(test_camera());
  Gaussian3D g;
  g.position = {0, 0, -3};
  EXPECT_FALSE(project_gaussian(g, 0, frame));
  g.position = {0, 0, 0.005};
  EXPECT_FALSE(project_gaussian(g, 0, frame));
  g.position = {40, 0, 3};
  g.log_scale = Eigen::Vector3d::Constant(std::log(0.01));
  EXPECT_FALSE(project_gaussian(g, 0, frame));
}

TEST(Composite, EmptyOpaqueAndThreeLayers) {
  const Eigen::Vector3d bg(0.1, 0.2, 0.3);
  EXPECT_EQ(composite_pixel({}, bg).color, bg);
  const CompositeEntry front{{0.7, 0.6, 0.5}, 1.0 - 1e-12, 1.0};
  EXPECT_NEAR((composite_pixel(std::span(&front, 1), bg).color - front.color).norm(), 0.0, 1e-11);
  const CompositeEntry three[] = {{{1, 0, 0}, 0.5, 1.0}, {{0, 1, 0}, 0.5, 2.0}, {{0, 0, 1}, 0.5, 3.0}};
  const CompositeResult r = composite_pixel(three, Eigen::Vector3d::Zero());
  EXPECT_EQ(r.color, Eigen::Vector3d(0.5, 0.25, 0.125));
  EXPECT_EQ(r.weight_sum + r.final_transmittance, 1.0);
}

TEST(Composite, UnsortedInputIsContractViolation) {
  const CompositeEntry bad[] = {{{1, 0, 0}, 0.5, 2.0}, {{0, 1, 0}, 0.5, 1.0}};
  EXPECT_THROW(composite_pixel(bad, Eigen::Vector3d::Zero()), ContractViolation);
  const CompositeEntry opaque[] = {{{1, 0, 0}, 1.0, 2.0}};
  EXPECT_THROW(composite_pixel(opaque, Eigen::Vector3d::Zero()), ContractViolation);
}

TEST(Render, SingleOpaqueGaussian) {
  SplatScene scene;
  scene.sh_degree = 0;
  scene.background = {0, 0, 1};
  Gaussian3D g;
  g.position = {0, 0, 4};
  g.opacity_logit = 20.0;
  g.log_scale = Eigen::Vector3d::Constant(std::log(1.0));
  const Eigen::Vector3d rgb(0.9, 0.3, 0.1);
  for (int c = 0; c < 3; ++c) g.sh[c] = (rgb[c] - 0.5) / kShC0;
  scene.gaussians.push_back(g);
  const RenderResult r = render_as<double>(scene, test_camera());
  for (int c = 0; c < 3; ++c) {
    EXPECT_NEAR(r.rgb.at(31, 31, c), rgb[c], 3e-3);
    EXPECT_EQ(r.rgb.at(0, 0, c), scene.background[c]);
  }
  EXPECT_NEAR(r.depth.at(31, 31), 4.0, 1e-9);
  EXPECT_EQ(r.alpha.at(0, 0), 0.0);
}

TEST(Render, TiledMatchesBruteForce) {
  Rng rng(77);
  for (int trial = 0; trial < 5; ++trial) {
    const SplatScene scene = random_scene(rng, 64);
    const PerspectiveCamera cam = test_camera();
    const RenderResult tiled = render_as<double>(scene, cam);
    const testing::ReferenceImage ref = testing::reference_render(scene, cam);
    double worst = 0.0;
    for (std::size_t i = 0; i < tiled.rgb.data().size(); ++i) {
      worst = std::max(worst, std::abs(tiled.rgb.data()[i] - ref.rgb.data()[i]));
    }
    EXPECT_LT(worst, 1e-6);
    EXPECT_LT(ref.worst_telescoping_error, 1e-9);
    const RenderResult f32 = render(scene, cam);
    for (std::size_t i = 0; i < tiled.rgb.data().size(); ++i) {
      EXPECT_NEAR(f32.rgb.data()[i], ref.rgb.data()[i], 1e-3);
    }
  }
}

TEST(Render, PermutationInvariant) {
  Rng rng(12);
  SplatScene scene = random_scene(rng, 48);
  const PerspectiveCamera cam = test_camera();
  const RenderResult base = render(scene, cam);
  for (int s = 0; s < 5; ++s) {
    for (std::size_t i = scene.gaussians.size() - 1; i > 0; --i) {
      std::swap(scene.gaussians[i], scene.gaussians[rng.below(i + 1)]);
    }
    const RenderResult r = render(scene, cam);
    EXPECT_EQ(r.rgb, base.rgb);
    EXPECT_EQ(r.depth, base.depth);
  }
}

TEST(Render, ChannelsStayInUnitRange) {
  Rng rng(13);
  SplatScene scene = random_scene(rng, 64);
  scene.background.setZero();
  const RenderResult r = render_as<double>(scene, test_camera());
  for (double v : r.rgb.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Render, RejectsEmptySceneAndBadCamera) {
  SplatScene empty;
  EXPECT_THROW(render(empty, test_camera()), DomainError);
  Rng rng(1);
  const SplatScene scene = random_scene(rng, 4);
  PerspectiveCamera cam = test_camera();
  cam.near_plane = -1.0;
  EXPECT_THROW(render(scene, cam), DomainError);
}

TEST(Init, SinglePointAndCount) {
  PointCloud cloud;
  cloud.positions.emplace_back(1, 2, 3);
  cloud.colors.emplace_back(0.25, 0.5, 0.75);
  const SplatScene scene = init_from_pointcloud(cloud);
  ASSERT_EQ(scene.gaussians.size(), 1u);
  const Gaussian3D& g = scene.gaussians[0];
  EXPECT_EQ(g.position, cloud.positions[0]);
  EXPECT_NEAR(g.opacity(), 0.1, 1e-12);
  EXPECT_EQ(g.rotation, Eigen::Vector4d(1, 0, 0, 0));
  const Eigen::Vector3d rgb = sh_to_color(g.sh, Eigen::Vector3d::UnitZ(), scene.sh_degree);
  EXPECT_NEAR((rgb - cloud.colors[0]).norm(), 0.0, 1e-12);
  EXPECT_THROW(init_from_pointcloud(PointCloud{}), DomainError);
}

TEST(Init, GridSpacingGivesScale) {
  PointCloud cloud;
  const double h = 0.25;
  for (int i = 0; i < 12; ++i) {
    for (int j = 0; j < 12; ++j) {
      for (int k = 0; k < 12; ++k) {
        cloud.positions.emplace_back(i * h, j * h, k * h);
        cloud.colors.emplace_back(0.5, 0.5, 0.5);
      }
    }
  }
  const SplatScene scene = init_from_pointcloud(cloud);
  ASSERT_EQ(scene.gaussians.size(), cloud.count());
  // Interior points have six neighbors at distance h.
  const Gaussian3D& g = scene.gaussians[(5 * 12 + 5) * 12 + 5];
  EXPECT_NEAR(std::exp(g.log_scale[0]), h, 1e-12);
}

TEST(SceneIo, RoundTripIsExact) {
  Rng rng(21);
  const SplatScene scene = random_scene(rng, 30, 3);
  const auto path = std::filesystem::temp_directory_path() / "verse3d_scene_test.ply";
  save_scene(path, scene);
  EXPECT_EQ(load_scene(path), scene);
  std::filesystem::remove(path);
  EXPECT_THROW(load_scene(path), NotFoundError);
  std::filesystem::remove(scene_sidecar_path(path));
}

}  // namespace
}  // namespace verse3d
