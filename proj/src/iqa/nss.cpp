#include "verse3d/iqa/nss.hpp"

#include <algorithm>
#include <cmath>

#include "verse3d/core/errors.hpp"

namespace verse3d {

namespace {

constexpr double kFlatTolerance = 1e-9;  // gray levels on the [0, 255] scale

int reflect(int i, int n) {
  // Symmetric reflection: ... 1 0 | 0 1 ... n-1 | n-1 n-2 ...
  while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
  return i;
}

std::vector<double> window_1d(const MscnConfig& cfg) {
  const int r = cfg.window_size / 2;
  std::vector<double> k(cfg.window_size);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) sum += k[i + r] = std::exp(-0.5 * i * i / (cfg.sigma * cfg.sigma));
  for (double& v : k) v /= sum;
  return k;
}

// Separable correlation on a plane of doubles.
std::vector<double> filter(const std::vector<double>& in, int w, int h, const std::vector<double>& k,
                           MscnBoundary boundary) {
  const int r = static_cast<int>(k.size()) / 2;
  const bool zero = boundary == MscnBoundary::kZero;
  std::vector<double> tmp(in.size()), out(in.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) {
        const int xi = x + i;
        if (zero && (xi < 0 || xi >= w)) continue;
        acc += k[i + r] * in[static_cast<std::size_t>(y) * w + reflect(xi, w)];
      }
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) {
        const int yi = y + i;
        if (zero && (yi < 0 || yi >= h)) continue;
        acc += k[i + r] * tmp[static_cast<std::size_t>(reflect(yi, h)) * w + x];
      }
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  return out;
}

// Generalized Gaussian ratio G(2/a)^2 / (G(1/a) G(3/a)), increasing in a.
double ggd_ratio(double a) {
  return std::exp(2.0 * std::lgamma(2.0 / a) - std::lgamma(1.0 / a) - std::lgamma(3.0 / a));
}

double solve_shape(double target) {
  constexpr double kLo = 0.2, kHi = 10.0, kStep = 0.001;
  const int n = static_cast<int>(std::lround((kHi - kLo) / kStep));
  int best = 0;
  double best_err = std::abs(ggd_ratio(kLo) - target);
  for (int i = 1; i <= n; ++i) {
    const double err = std::abs(ggd_ratio(kLo + i * kStep) - target);
    if (err < best_err) {
      best_err = err;
      best = i;
    }
  }
  double lo = kLo + std::max(0, best - 1) * kStep;
  double hi = kLo + std::min(n, best + 1) * kStep;
  if ((ggd_ratio(lo) - target) * (ggd_ratio(hi) - target) > 0.0) return kLo + best * kStep;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (ggd_ratio(mid) < target) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

void MscnConfig::validate() const {
  if (window_size < 1 || window_size % 2 == 0) throw ConfigError("mscn.window_size must be odd and >= 1");
  if (!(sigma > 0.0)) throw ConfigError("mscn.sigma must be > 0");
  if (!(c > 0.0)) throw ConfigError("mscn.c must be > 0");
}

std::vector<double> gaussian_window(const MscnConfig& cfg) {
  cfg.validate();
  const std::vector<double> k = window_1d(cfg);
  std::vector<double> w(k.size() * k.size());
  for (std::size_t i = 0; i < k.size(); ++i) {
    for (std::size_t j = 0; j < k.size(); ++j) w[i * k.size() + j] = k[i] * k[j];
  }
  return w;
}

MscnResult mscn_full(const ImageBuffer& gray, const MscnConfig& cfg) {
  cfg.validate();
  if (gray.channels() != 1) throw DomainError("mscn: expected a single-channel image");
  const int w = gray.width(), h = gray.height();
  std::vector<double> img(gray.data().begin(), gray.data().end());
  for (double& v : img) v *= 255.0;
  std::vector<double> sq(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) sq[i] = img[i] * img[i];
  const std::vector<double> k = window_1d(cfg);
  const std::vector<double> mu = filter(img, w, h, k, cfg.boundary);
  const std::vector<double> mu2 = filter(sq, w, h, k, cfg.boundary);
  MscnResult r{ImageBuffer(w, h, 1), ImageBuffer(w, h, 1)};
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double sigma = std::sqrt(std::abs(mu2[i] - mu[i] * mu[i]));
    r.local_sigma.data()[i] = sigma;
    // Differences this small are filter rounding in flat regions; their sign
    // is noise, so they count as exact zeros.
    const double centered = std::abs(img[i] - mu[i]) <= kFlatTolerance ? 0.0 : img[i] - mu[i];
    r.coefficients.data()[i] = centered / (sigma + cfg.c);
  }
  return r;
}

ImageBuffer mscn(const ImageBuffer& gray, const MscnConfig& cfg) { return mscn_full(gray, cfg).coefficients; }

AggdParams aggd_fit(std::span<const double> x) {
  if (x.size() < 2) throw DegenerateInputError("aggd_fit: need at least 2 samples");
  double sum_abs = 0.0, sum_sq = 0.0, left_sq = 0.0, right_sq = 0.0;
  std::size_t nl = 0, nr = 0;
  for (double v : x) {
    sum_abs += std::abs(v);
    sum_sq += v * v;
    if (v < 0.0) {
      left_sq += v * v;
      ++nl;
    } else {
      right_sq += v * v;
      ++nr;
    }
  }
  if (!(sum_sq > 0.0)) throw DegenerateInputError("aggd_fit: all samples are zero");
  if (nl == 0 || nr == 0) throw DegenerateInputError("aggd_fit: samples lie on one side of zero");
  const double n = static_cast<double>(x.size());
  const double sl = std::sqrt(left_sq / nl);
  const double sr = std::sqrt(right_sq / nr);
  const double gamma = sl / sr;
  const double rhat = (sum_abs / n) * (sum_abs / n) / (sum_sq / n);
  const double rhat_norm =
      rhat * (gamma * gamma * gamma + 1.0) * (gamma + 1.0) / ((gamma * gamma + 1.0) * (gamma * gamma + 1.0));
  AggdParams p;
  p.alpha = solve_shape(rhat_norm);
  p.sigma_left = sl;
  p.sigma_right = sr;
  p.eta = (sr - sl) * std::exp(std::lgamma(2.0 / p.alpha) -
                               0.5 * (std::lgamma(1.0 / p.alpha) + std::lgamma(3.0 / p.alpha)));
  return p;
}

ScaleFeatures nss_block_features(const ImageBuffer& m, int x0, int y0, int w, int h) {
  if (m.channels() != 1 || x0 < 0 || y0 < 0 || w < 2 || h < 2 || x0 + w > m.width() || y0 + h > m.height()) {
    throw DomainError("nss_block_features: block outside the coefficient map");
  }
  ScaleFeatures f{};
  std::vector<double> buf;
  buf.reserve(static_cast<std::size_t>(w) * h);
  for (int y = y0; y < y0 + h; ++y) {
    for (int x = x0; x < x0 + w; ++x) buf.push_back(m.at(x, y));
  }
  const AggdParams base = aggd_fit(buf);
  f[0] = base.alpha;
  f[1] = 0.5 * (base.sigma_left * base.sigma_left + base.sigma_right * base.sigma_right);
  // (dx, dy) of the partner pixel, with the block range shrunk to stay inside.
  constexpr int kShifts[4][2] = {{1, 0}, {0, 1}, {1, 1}, {-1, 1}};
  for (int s = 0; s < 4; ++s) {
    const int dx = kShifts[s][0], dy = kShifts[s][1];
    buf.clear();
    for (int y = y0; y < y0 + h - dy; ++y) {
      for (int x = std::max(x0, x0 - dx); x < std::min(x0 + w, x0 + w - dx); ++x) {
        buf.push_back(m.at(x, y) * m.at(x + dx, y + dy));
      }
    }
    const AggdParams p = aggd_fit(buf);
    f[2 + 4 * s] = p.alpha;
    f[3 + 4 * s] = p.eta;
    f[4 + 4 * s] = p.sigma_left * p.sigma_left;
    f[5 + 4 * s] = p.sigma_right * p.sigma_right;
  }
  return f;
}

ImageBuffer to_gray(const ImageBuffer& img) {
  if (img.channels() == 1) return img;
  if (img.channels() != 3) throw DomainError("to_gray: expected 1 or 3 channels");
  return luminance(img);
}

ImageBuffer half_scale(const ImageBuffer& gray) {
  return resize_bicubic(gray, std::max(1, gray.width() / 2), std::max(1, gray.height() / 2));
}

ImageBuffer half_scale_cubic(const ImageBuffer& gray) {
  if (gray.channels() != 1) throw DomainError("half_scale_cubic: expected a single-channel image");
  const int w = gray.width(), h = gray.height();
  const int ow = std::max(1, static_cast<int>(std::nearbyint(0.5 * w)));
  const int oh = std::max(1, static_cast<int>(std::nearbyint(0.5 * h)));
  // Source position 2x + 0.5 always has fraction 0.5, so the taps at offsets
  // -1, 0, 1, 2 have fixed weights.
  constexpr double kW[4] = {-0.09375, 0.59375, 0.59375, -0.09375};
  ImageBuffer tmp(ow, h, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += kW[k] * gray.at(std::clamp(2 * x - 1 + k, 0, w - 1), y);
      tmp.at(x, y) = acc;
    }
  }
  ImageBuffer out(ow, oh, 1);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += kW[k] * tmp.at(x, std::clamp(2 * y - 1 + k, 0, h - 1));
      out.at(x, y) = acc;
    }
  }
  return out;
}

}  // namespace verse3d
