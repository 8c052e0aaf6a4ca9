#include "verse3d/optim/backward.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "verse3d/core/errors.hpp"
#include "verse3d/core/parallel.hpp"
#include "verse3d/optim/loss.hpp"

namespace verse3d {

GaussianGrad& GaussianGrad::operator+=(const GaussianGrad& o) {
  position += o.position;
  opacity_logit += o.opacity_logit;
  for (std::size_t i = 0; i < sh.size(); ++i) sh[i] += o.sh[i];
  log_scale += o.log_scale;
  rotation += o.rotation;
  return *this;
}

namespace {

// d loss with respect to the screen-space quantities of one gaussian.
struct ScreenGrad {
  double mean[2] = {0, 0};
  double conic[3] = {0, 0, 0};  // xx, xy (the single off-diagonal parameter), yy
  double opacity = 0;
  double color[3] = {0, 0, 0};

  void add(const ScreenGrad& o) {
    for (int i = 0; i < 2; ++i) mean[i] += o.mean[i];
    for (int i = 0; i < 3; ++i) conic[i] += o.conic[i];
    opacity += o.opacity;
    for (int i = 0; i < 3; ++i) color[i] += o.color[i];
  }
};

template <typename T>
struct Contribution {
  std::uint32_t slot;  // position in the tile list
  T alpha;
  T gauss;  // exp(-q/2)
  T dx, dy;
  T transmittance;  // before this splat
  bool clamped;
};

// dR/dq for a unit quaternion (w, x, y, z); returns the four 3x3 partials.
std::array<Eigen::Matrix3d, 4> rotation_partials(const Eigen::Vector4d& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  std::array<Eigen::Matrix3d, 4> d;
  d[0] << 0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0;
  d[1] << 0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x;
  d[2] << -4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y;
  d[3] << -4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0;
  return d;
}

// Chain rule from screen space back to the gaussian parameters, in 64-bit.
GaussianGrad project_backward(const Gaussian3D& g, int sh_degree, const PerspectiveCamera& cam,
                              const ScreenGrad& sg) {
  GaussianGrad out;
  const Eigen::Matrix3d w = cam.world_to_camera();
  const Eigen::Vector3d t = w * (g.position - cam.position);
  const double f = cam.focal();
  const double tz = t.z();
  const double lim_x = kJacobianTanLimit * 0.5 * cam.width / f;
  const double lim_y = kJacobianTanLimit * 0.5 * cam.height / f;
  const double rx = t.x() / tz, ry = t.y() / tz;
  const bool free_x = rx > -lim_x && rx < lim_x;
  const bool free_y = ry > -lim_y && ry < lim_y;
  const double txc = std::clamp(rx, -lim_x, lim_x) * tz;
  const double tyc = std::clamp(ry, -lim_y, lim_y) * tz;
  Eigen::Matrix<double, 2, 3> jac;
  jac << f / tz, 0, -f * txc / (tz * tz), 0, -f / tz, f * tyc / (tz * tz);

  const Eigen::Vector4d qn = g.rotation / g.rotation.norm();
  const Eigen::Matrix3d r = rotation_matrix(g.rotation);
  const Eigen::Vector3d var = (2.0 * g.log_scale).array().exp();
  const Eigen::Matrix3d sigma = r * var.asDiagonal() * r.transpose();
  const Eigen::Matrix<double, 2, 3> m = jac * w;
  Eigen::Matrix2d cov = m * sigma * m.transpose();
  cov += kCovarianceFloor * Eigen::Matrix2d::Identity();
  const Eigen::Matrix2d conic = cov.inverse();

  // Conic -> 2D covariance -> (M, Sigma).
  Eigen::Matrix2d g_conic;
  g_conic << sg.conic[0], 0.5 * sg.conic[1], 0.5 * sg.conic[1], sg.conic[2];
  const Eigen::Matrix2d g_cov = -conic * g_conic * conic;
  const Eigen::Matrix3d g_sigma = m.transpose() * g_cov * m;
  const Eigen::Matrix<double, 2, 3> g_m = 2.0 * g_cov * m * sigma;
  const Eigen::Matrix<double, 2, 3> g_j = g_m * w.transpose();

  // Jacobian and mean -> camera-space point.
  Eigen::Vector3d g_t = Eigen::Vector3d::Zero();
  const double dtxc_dtx = free_x ? 1.0 : 0.0, dtxc_dtz = free_x ? 0.0 : txc / tz;
  const double dtyc_dty = free_y ? 1.0 : 0.0, dtyc_dtz = free_y ? 0.0 : tyc / tz;
  g_t.z() += g_j(0, 0) * (-f / (tz * tz)) + g_j(1, 1) * (f / (tz * tz));
  g_t.x() += g_j(0, 2) * (-f * dtxc_dtx / (tz * tz));
  g_t.z() += g_j(0, 2) * (-f * dtxc_dtz / (tz * tz) + 2.0 * f * txc / (tz * tz * tz));
  g_t.y() += g_j(1, 2) * (f * dtyc_dty / (tz * tz));
  g_t.z() += g_j(1, 2) * (f * dtyc_dtz / (tz * tz) - 2.0 * f * tyc / (tz * tz * tz));
  g_t.x() += sg.mean[0] * f / tz;
  g_t.z() += sg.mean[0] * (-f * t.x() / (tz * tz));
  g_t.y() += sg.mean[1] * (-f / tz);
  g_t.z() += sg.mean[1] * (f * t.y() / (tz * tz));
  out.position = w.transpose() * g_t;

  // Sigma -> scale and rotation.
  const Eigen::Matrix3d rtgr = r.transpose() * g_sigma * r;
  for (int k = 0; k < 3; ++k) out.log_scale[k] = 2.0 * var[k] * rtgr(k, k);
  const Eigen::Matrix3d g_r = 2.0 * g_sigma * r * var.asDiagonal();
  const auto partials = rotation_partials(qn);
  Eigen::Vector4d g_qn;
  for (int i = 0; i < 4; ++i) g_qn[i] = (g_r.array() * partials[i].array()).sum();
  out.rotation = (g_qn - qn * qn.dot(g_qn)) / g.rotation.norm();

  // Opacity.
  const double o = g.opacity();
  out.opacity_logit = sg.opacity * o * (1.0 - o);

  // SH color, including the view-direction dependence on position.
  const Eigen::Vector3d rel = g.position - cam.position;
  const double dist = rel.norm();
  const Eigen::Vector3d dir = dist > 0.0 ? Eigen::Vector3d(rel / dist) : rel;
  double basis[kMaxShCoeffs], dbasis[3 * kMaxShCoeffs];
  sh_basis_with_jacobian(sh_degree, dir, basis, dbasis);
  const int ncoef = sh_coeff_count(sh_degree);
  Eigen::Vector3d g_dir = Eigen::Vector3d::Zero();
  for (int c = 0; c < 3; ++c) {
    double v = 0.5;
    for (int k = 0; k < ncoef; ++k) v += basis[k] * g.sh[k * 3 + c];
    if (!(v > 0.0 && v < 1.0)) continue;
    for (int k = 0; k < ncoef; ++k) {
      out.sh[k * 3 + c] = basis[k] * sg.color[c];
      for (int j = 0; j < 3; ++j) g_dir[j] += sg.color[c] * g.sh[k * 3 + c] * dbasis[k * 3 + j];
    }
  }
  if (dist > 0.0) out.position += (g_dir - dir * dir.dot(g_dir)) / dist;
  return out;
}

}  // namespace

template <typename T>
std::vector<GaussianGrad> render_backward(const SplatScene& scene, const PerspectiveCamera& cam,
                                          const ImageBuffer& d_rgb) {
  scene.validate();
  if (d_rgb.width() != cam.width || d_rgb.height() != cam.height || d_rgb.channels() != 3) {
    throw DomainError("render_backward: gradient image does not match the camera");
  }
  const CameraFrame<T> frame = CameraFrame<T>::make(cam);
  const TileBins<T> bins = bin_gaussians(scene, frame);
  const int ntiles = frame.tiles_x * frame.tiles_y;
  std::vector<std::vector<ScreenGrad>> tile_grads(ntiles);
  const T bg[3] = {T(scene.background[0]), T(scene.background[1]), T(scene.background[2])};

  parallel_for_each_index(ntiles, [&](int tile) {
    const auto& list = bins.tiles[tile];
    auto& grads = tile_grads[tile];
    grads.assign(list.size(), ScreenGrad{});
    if (list.empty()) return;
    const int tx = tile % frame.tiles_x;
    const int ty = tile / frame.tiles_x;
    const int x1 = std::min(cam.width, (tx + 1) * kTileSize);
    const int y1 = std::min(cam.height, (ty + 1) * kTileSize);
    std::vector<Contribution<T>> contribs;
    for (int y = ty * kTileSize; y < y1; ++y) {
      for (int x = tx * kTileSize; x < x1; ++x) {
        const T px = T(x) + T(0.5);
        const T py = T(y) + T(0.5);
        contribs.clear();
        T trans = T(1);
        for (std::uint32_t slot = 0; slot < list.size(); ++slot) {
          const ProjectedGaussian<T>& p = *bins.projected[bins.order[list[slot]]];
          const T dx = px - p.mean_x;
          const T dy = py - p.mean_y;
          const T q = p.conic_xx * dx * dx + T(2) * p.conic_xy * dx * dy + p.conic_yy * dy * dy;
          if (!(q <= T(kCutoffMahalanobisSq))) continue;
          const T gauss = std::exp(T(-0.5) * q);
          const T raw = p.opacity * gauss;
          const bool clamped = raw > T(kMaxAlpha);
          const T a = clamped ? T(kMaxAlpha) : raw;
          if (a == T(0)) continue;
          contribs.push_back({slot, a, gauss, dx, dy, trans, clamped});
          trans *= T(1) - a;
        }
        const double dc[3] = {d_rgb.at(x, y, 0), d_rgb.at(x, y, 1), d_rgb.at(x, y, 2)};
        // Color accumulated behind the current splat, background included.
        T behind[3] = {bg[0] * trans, bg[1] * trans, bg[2] * trans};
        for (auto it = contribs.rbegin(); it != contribs.rend(); ++it) {
          const ProjectedGaussian<T>& p = *bins.projected[bins.order[list[it->slot]]];
          ScreenGrad& sg = grads[it->slot];
          const T w = it->alpha * it->transmittance;
          double d_alpha = 0.0;
          for (int c = 0; c < 3; ++c) {
            sg.color[c] += dc[c] * static_cast<double>(w);
            d_alpha += dc[c] * static_cast<double>(p.color[c] * it->transmittance -
                                                   behind[c] / (T(1) - it->alpha));
            behind[c] += p.color[c] * w;
          }
          if (it->clamped) continue;
          const double gauss = static_cast<double>(it->gauss);
          const double o = static_cast<double>(p.opacity);
          sg.opacity += d_alpha * gauss;
          const double d_q = d_alpha * (-0.5 * o * gauss);
          const double dx = static_cast<double>(it->dx), dy = static_cast<double>(it->dy);
          const double cxx = static_cast<double>(p.conic_xx);
          const double cxy = static_cast<double>(p.conic_xy);
          const double cyy = static_cast<double>(p.conic_yy);
          sg.mean[0] += d_q * -2.0 * (cxx * dx + cxy * dy);
          sg.mean[1] += d_q * -2.0 * (cxy * dx + cyy * dy);
          sg.conic[0] += d_q * dx * dx;
          sg.conic[1] += d_q * 2.0 * dx * dy;
          sg.conic[2] += d_q * dy * dy;
        }
      }
    }
  });

  std::vector<ScreenGrad> screen(scene.gaussians.size());
  for (int tile = 0; tile < ntiles; ++tile) {
    const auto& list = bins.tiles[tile];
    for (std::size_t slot = 0; slot < list.size(); ++slot) {
      screen[bins.order[list[slot]]].add(tile_grads[tile][slot]);
    }
  }
  std::vector<GaussianGrad> out(scene.gaussians.size());
  parallel_for_each_index(static_cast<int>(scene.gaussians.size()), [&](int i) {
    if (!bins.projected[i]) return;
    out[i] = project_backward(scene.gaussians[i], scene.sh_degree, cam, screen[i]);
  });
  return out;
}

template <typename T>
BackwardResult backward(const SplatScene& scene, const PerspectiveCamera& cam,
                        const ImageBuffer& target, double ssim_weight) {
  BackwardResult r;
  r.render = render_as<T>(scene, cam);
  const LossValue lv = image_loss(r.render.rgb, target, ssim_weight);
  r.loss = lv.value;
  r.grads = render_backward<T>(scene, cam, lv.gradient);
  return r;
}

template std::vector<GaussianGrad> render_backward<float>(const SplatScene&,
                                                          const PerspectiveCamera&,
                                                          const ImageBuffer&);
template std::vector<GaussianGrad> render_backward<double>(const SplatScene&,
                                                           const PerspectiveCamera&,
                                                           const ImageBuffer&);
template BackwardResult backward<float>(const SplatScene&, const PerspectiveCamera&,
                                        const ImageBuffer&, double);
template BackwardResult backward<double>(const SplatScene&, const PerspectiveCamera&,
                                         const ImageBuffer&, double);

}  // namespace verse3d
