#pragma once

// Central finite-difference checks of the analytic splat gradients.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "verse3d/core/rng.hpp"
#include "verse3d/optim/backward.hpp"
#include "verse3d/optim/loss.hpp"
#include "verse3d/splat/render.hpp"

namespace verse3d::testing {

/// Accessor for one scalar parameter of gaussian `index`.
using ParamRef = std::function<double&(Gaussian3D&)>;

struct ParamGroup {
  std::string name;
  std::vector<ParamRef> params;
  std::function<double(const GaussianGrad&, std::size_t)> analytic;
};

inline std::vector<ParamGroup> parameter_groups(int sh_degree) {
  std::vector<ParamGroup> groups;
  ParamGroup pos{"position", {}, [](const GaussianGrad& g, std::size_t k) { return g.position[k]; }};
  for (int k = 0; k < 3; ++k) pos.params.push_back([k](Gaussian3D& g) -> double& { return g.position[k]; });
  groups.push_back(pos);
  ParamGroup op{"opacity", {[](Gaussian3D& g) -> double& { return g.opacity_logit; }},
                [](const GaussianGrad& g, std::size_t) { return g.opacity_logit; }};
  groups.push_back(op);
  ParamGroup sh{"sh", {}, [](const GaussianGrad& g, std::size_t k) { return g.sh[k]; }};
  for (int k = 0; k < 3 * sh_coeff_count(sh_degree); ++k) {
    sh.params.push_back([k](Gaussian3D& g) -> double& { return g.sh[k]; });
  }
  groups.push_back(sh);
  ParamGroup sc{"scale", {}, [](const GaussianGrad& g, std::size_t k) { return g.log_scale[k]; }};
  for (int k = 0; k < 3; ++k) sc.params.push_back([k](Gaussian3D& g) -> double& { return g.log_scale[k]; });
  groups.push_back(sc);
  ParamGroup rot{"rotation", {}, [](const GaussianGrad& g, std::size_t k) { return g.rotation[k]; }};
  for (int k = 0; k < 4; ++k) rot.params.push_back([k](Gaussian3D& g) -> double& { return g.rotation[k]; });
  groups.push_back(rot);
  return groups;
}

struct GroupError {
  std::string name;
  double relative_error;  // |analytic - fd| / |fd| over the whole group vector
};

/// Compares render_backward<double> with central differences of
/// image_loss(render_as<double>) for every parameter of gaussian `index`.
inline std::vector<GroupError> check_gradients(const SplatScene& scene, const PerspectiveCamera& cam,
                                               const ImageBuffer& target, double ssim_weight,
                                               std::size_t index, double h = 1e-4) {
  const BackwardResult base = backward<double>(scene, cam, target, ssim_weight);
  std::vector<GroupError> out;
  for (const ParamGroup& group : parameter_groups(scene.sh_degree)) {
    double diff2 = 0.0, ref2 = 0.0;
    for (std::size_t k = 0; k < group.params.size(); ++k) {
      SplatScene plus = scene, minus = scene;
      group.params[k](plus.gaussians[index]) += h;
      group.params[k](minus.gaussians[index]) -= h;
      const double lp = image_loss(render_as<double>(plus, cam).rgb, target, ssim_weight).value;
      const double lm = image_loss(render_as<double>(minus, cam).rgb, target, ssim_weight).value;
      const double fd = (lp - lm) / (2.0 * h);
      const double an = group.analytic(base.grads[index], k);
      diff2 += (an - fd) * (an - fd);
      ref2 += fd * fd;
    }
    out.push_back({group.name, ref2 > 0.0 ? std::sqrt(diff2 / ref2) : std::sqrt(diff2)});
  }
  return out;
}

/// A gaussian whose 3-sigma ellipse covers the whole probe image, so no
/// pixel sits on the cutoff discontinuity.
inline SplatScene probe_scene(Rng& rng, int sh_degree = 2) {
  SplatScene scene;
  scene.sh_degree = sh_degree;
  scene.background = {0.2, 0.3, 0.4};
  Gaussian3D g;
  g.position = {rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(3.0, 4.0)};
  g.opacity_logit = rng.uniform(-0.5, 0.5);
  g.log_scale = {std::log(rng.uniform(2.0, 3.0)), std::log(rng.uniform(2.0, 3.0)),
                 std::log(rng.uniform(2.0, 3.0))};
  g.rotation = Eigen::Vector4d(rng.normal(), rng.normal(), rng.normal(), rng.normal()).normalized();
  for (int c = 0; c < 3; ++c) g.sh[c] = (rng.uniform(0.3, 0.7) - 0.5) / kShC0;
  for (int k = 1; k < sh_coeff_count(sh_degree); ++k) {
    for (int c = 0; c < 3; ++c) g.sh[k * 3 + c] = rng.normal(0.0, 0.1);
  }
  scene.gaussians.push_back(g);
  return scene;
}

/// Target = render + offsets of magnitude >= 0.05, away from the L1 kink.
inline ImageBuffer offset_target(const ImageBuffer& rendered, Rng& rng) {
  ImageBuffer t = rendered;
  for (double& v : t.data()) {
    const double off = rng.uniform(0.05, 0.15);
    v += rng.uniform() < 0.5 ? -off : off;
  }
  return t;
}

}  // namespace verse3d::testing
