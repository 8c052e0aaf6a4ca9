#include "verse3d/optim/loss.hpp"

#include <array>
#include <cmath>
#include <vector>

#include "verse3d/core/errors.hpp"

namespace verse3d {

namespace {

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;
constexpr int kRadius = kSsimWindow / 2;

std::array<double, kSsimWindow> window_weights() {
  std::array<double, kSsimWindow> w{};
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kRadius;
    w[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

// Separable same-size filter of one plane with zero padding. The window is
// symmetric, so this is also its own adjoint.
std::vector<double> filter_plane(const std::vector<double>& in, int w, int h) {
  static const auto k = window_weights();
  std::vector<double> tmp(in.size(), 0.0), out(in.size(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = -kRadius; i <= kRadius; ++i) {
        const int xx = x + i;
        if (xx >= 0 && xx < w) s += k[i + kRadius] * in[y * w + xx];
      }
      tmp[y * w + x] = s;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = -kRadius; i <= kRadius; ++i) {
        const int yy = y + i;
        if (yy >= 0 && yy < h) s += k[i + kRadius] * tmp[yy * w + x];
      }
      out[y * w + x] = s;
    }
  }
  return out;
}

std::vector<double> plane(const ImageBuffer& img, int c) {
  std::vector<double> p(img.pixel_count());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) p[y * img.width() + x] = img.at(x, y, c);
  }
  return p;
}

// Mean SSIM of one channel; when `grad` is non-null it receives d mean / d a.
double ssim_channel(const std::vector<double>& a, const std::vector<double>& b, int w, int h,
                    double norm, std::vector<double>* grad) {
  const std::size_t n = a.size();
  std::vector<double> aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = filter_plane(a, w, h);
  const auto mu_b = filter_plane(b, w, h);
  const auto e_aa = filter_plane(aa, w, h);
  const auto e_bb = filter_plane(bb, w, h);
  const auto e_ab = filter_plane(ab, w, h);
  double total = 0.0;
  std::vector<double> d_mu(n), d_var(n), d_cov(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double var_a = e_aa[i] - mu_a[i] * mu_a[i];
    const double var_b = e_bb[i] - mu_b[i] * mu_b[i];
    const double cov = e_ab[i] - mu_a[i] * mu_b[i];
    const double n1 = 2.0 * mu_a[i] * mu_b[i] + kC1;
    const double n2 = 2.0 * cov + kC2;
    const double d1 = mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kC1;
    const double d2 = var_a + var_b + kC2;
    const double s = n1 * n2 / (d1 * d2);
    total += s;
    d_mu[i] = norm * (2.0 * mu_b[i] * n2 / (d1 * d2) - s * 2.0 * mu_a[i] / d1);
    d_var[i] = norm * (-s / d2);
    d_cov[i] = norm * (2.0 * n1 / (d1 * d2));
  }
  if (grad) {
    // mu_a = G*a, var_a = G*(a^2) - mu_a^2, cov = G*(ab) - mu_a mu_b.
    std::vector<double> lin(n);
    for (std::size_t i = 0; i < n; ++i) {
      lin[i] = d_mu[i] - 2.0 * d_var[i] * mu_a[i] - d_cov[i] * mu_b[i];
    }
    const auto g_lin = filter_plane(lin, w, h);
    const auto g_var = filter_plane(d_var, w, h);
    const auto g_cov = filter_plane(d_cov, w, h);
    grad->resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      (*grad)[i] = g_lin[i] + 2.0 * a[i] * g_var[i] + b[i] * g_cov[i];
    }
  }
  return total;
}

void check_pair(const ImageBuffer& a, const ImageBuffer& b) {
  if (!a.same_shape(b) || a.empty()) throw DomainError("loss: image shapes differ or are empty");
}

}  // namespace

double ssim(const ImageBuffer& a, const ImageBuffer& b) {
  check_pair(a, b);
  double total = 0.0;
  for (int c = 0; c < a.channels(); ++c) {
    total += ssim_channel(plane(a, c), plane(b, c), a.width(), a.height(), 1.0, nullptr);
  }
  return total / static_cast<double>(a.data().size());
}

LossValue image_loss(const ImageBuffer& rendered, const ImageBuffer& target, double ssim_weight) {
  check_pair(rendered, target);
  if (!(ssim_weight >= 0.0 && ssim_weight <= 1.0)) throw DomainError("loss: ssim_weight outside [0,1]");
  const double n = static_cast<double>(rendered.data().size());
  LossValue out{0.0, ImageBuffer(rendered.width(), rendered.height(), rendered.channels())};
  const double wl1 = (1.0 - ssim_weight) / n;
  double l1 = 0.0;
  for (std::size_t i = 0; i < rendered.data().size(); ++i) {
    const double d = rendered.data()[i] - target.data()[i];
    l1 += std::abs(d);
    out.gradient.data()[i] = d > 0.0 ? wl1 : (d < 0.0 ? -wl1 : 0.0);
  }
  out.value = (1.0 - ssim_weight) * l1 / n;
  if (ssim_weight > 0.0) {
    double s = 0.0;
    std::vector<double> g;
    for (int c = 0; c < rendered.channels(); ++c) {
      s += ssim_channel(plane(rendered, c), plane(target, c), rendered.width(), rendered.height(),
                        -ssim_weight / n, &g);
      for (int y = 0; y < rendered.height(); ++y) {
        for (int x = 0; x < rendered.width(); ++x) {
          out.gradient.at(x, y, c) += g[y * rendered.width() + x];
        }
      }
    }
    out.value += ssim_weight * (1.0 - s / n);
  }
  return out;
}

}  // namespace verse3d
