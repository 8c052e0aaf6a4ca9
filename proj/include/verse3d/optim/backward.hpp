#pragma once

#include <array>
#include <vector>

#include <Eigen/Core>

#include "verse3d/core/image.hpp"
#include "verse3d/geometry/camera.hpp"
#include "verse3d/splat/gaussian.hpp"
#include "verse3d/splat/render.hpp"

namespace verse3d {

/// Gradient of a scalar with respect to every parameter of one gaussian.
struct GaussianGrad {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double opacity_logit = 0.0;
  std::array<double, 3 * kMaxShCoeffs> sh{};
  Eigen::Vector3d log_scale = Eigen::Vector3d::Zero();
  Eigen::Vector4d rotation = Eigen::Vector4d::Zero();

  GaussianGrad& operator+=(const GaussianGrad& o);
};

/// Reverse-mode pass of render_as<T>: given d loss / d rgb (3-channel image of
/// the camera's size), returns per-gaussian parameter gradients. Culled
/// gaussians receive zero. Per-tile partial sums are reduced in tile order, so
/// results do not depend on scheduling.
template <typename T>
std::vector<GaussianGrad> render_backward(const SplatScene& scene, const PerspectiveCamera& cam,
                                          const ImageBuffer& d_rgb);

struct BackwardResult {
  double loss = 0.0;
  RenderResult render;
  std::vector<GaussianGrad> grads;
};

/// Renders, evaluates image_loss against `target`, and back-propagates.
template <typename T>
BackwardResult backward(const SplatScene& scene, const PerspectiveCamera& cam,
                        const ImageBuffer& target, double ssim_weight);

}  // namespace verse3d
