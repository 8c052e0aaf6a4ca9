#pragma once

#include "verse3d/core/image.hpp"

namespace verse3d {

inline constexpr double kDefaultSsimWeight = 0.2;
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

struct LossValue {
  double value = 0.0;
  ImageBuffer gradient;  // d value / d rendered, same shape as the inputs
};

/// Mean SSIM over all pixels and channels (11x11 Gaussian window, sigma 1.5,
/// zero padding, C1 = 0.01^2, C2 = 0.03^2).
double ssim(const ImageBuffer& a, const ImageBuffer& b);

/// (1 - w) * mean|rendered - target| + w * (1 - SSIM(rendered, target)) and its
/// analytic gradient with respect to `rendered`. Throws DomainError on shape
/// mismatch or w outside [0,1].
LossValue image_loss(const ImageBuffer& rendered, const ImageBuffer& target,
                     double ssim_weight = kDefaultSsimWeight);

}  // namespace verse3d
