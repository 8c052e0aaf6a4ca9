#pragma once

#include <array>
#include <span>
#include <vector>

#include "verse3d/core/image.hpp"

namespace verse3d {

// Natural-scene-statistics building blocks shared by NIQE and BRISQUE.

enum class MscnBoundary { kSymmetric, kZero };

struct MscnConfig {
  int window_size = 7;
  double sigma = 7.0 / 6.0;
  double c = 1.0;  // stabilizer, on the [0, 255] luminance scale
  MscnBoundary boundary = MscnBoundary::kSymmetric;

  /// Throws ConfigError: odd window_size >= 1, sigma > 0, c > 0.
  void validate() const;
};

/// Normalized 2D Gaussian window (row-major, window_size^2 entries).
std::vector<double> gaussian_window(const MscnConfig& cfg = {});

struct MscnResult {
  ImageBuffer coefficients;  // (I - mu) / (sigma + C)
  ImageBuffer local_sigma;   // sigma, on the [0, 255] scale
};

/// Mean-subtracted contrast-normalized coefficients of a single-channel image
/// with values in [0, 1] (scaled to [0, 255] internally). The local mean and
/// deviation use the Gaussian window with symmetric boundary reflection
/// (kZero pads with zeros instead).
MscnResult mscn_full(const ImageBuffer& gray, const MscnConfig& cfg = {});
ImageBuffer mscn(const ImageBuffer& gray, const MscnConfig& cfg = {});

struct AggdParams {
  double alpha = 0.0;        // shape
  double sigma_left = 0.0;
  double sigma_right = 0.0;
  double eta = 0.0;          // mean offset (sigma_r - sigma_l) * G(2/a) / sqrt(G(1/a) G(3/a))
};

/// Moment-matching AGGD fit: the shape solves the generalized Gaussian ratio
/// equation (grid 0.2..10 step 0.001, refined by bisection). Left samples are
/// x < 0, right samples x >= 0. Throws DegenerateInputError for fewer than two
/// samples, all-zero input, or no negative sample.
AggdParams aggd_fit(std::span<const double> samples);

/// Features per scale: MSCN [alpha, (sl^2 + sr^2) / 2], then for the
/// horizontal, vertical, main-diagonal and anti-diagonal neighbor products
/// [alpha, eta, sl^2, sr^2].
inline constexpr int kNssFeaturesPerScale = 18;
using ScaleFeatures = std::array<double, kNssFeaturesPerScale>;

/// Features of the block [x0, x0 + w) x [y0, y0 + h) of an MSCN map. Neighbor
/// products stay inside the block.
ScaleFeatures nss_block_features(const ImageBuffer& mscn_map, int x0, int y0, int w, int h);

/// Single-channel [0, 1] image from RGB (Rec. 601) or grayscale input.
ImageBuffer to_gray(const ImageBuffer& img);

/// Half-size image for the second NIQE scale (antialiased bicubic).
ImageBuffer half_scale(const ImageBuffer& gray);

/// Half-size image for the second BRISQUE scale: plain cubic interpolation
/// (a = -0.75) at source position 2x + 0.5 with replicated borders, output
/// size rounded half-to-even. This is the resampling the shipped regressor's
/// reference scorer uses.
ImageBuffer half_scale_cubic(const ImageBuffer& gray);

}  // namespace verse3d
