#include "verse3d/splat/render.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "verse3d/core/errors.hpp"
#include "verse3d/core/parallel.hpp"

namespace verse3d {

template <typename T>
CameraFrame<T> CameraFrame<T>::make(const PerspectiveCamera& cam) {
  cam.validate();
  CameraFrame f;
  f.world_to_camera = cam.world_to_camera().cast<T>();
  f.position = cam.position.cast<T>();
  f.focal = static_cast<T>(cam.focal());
  f.cx = static_cast<T>(cam.cx());
  f.cy = static_cast<T>(cam.cy());
  f.near_plane = static_cast<T>(cam.near_plane);
  const double tan_x = 0.5 * cam.width / cam.focal();
  const double tan_y = 0.5 * cam.height / cam.focal();
  f.lim_x = static_cast<T>(kJacobianTanLimit * tan_x);
  f.lim_y = static_cast<T>(kJacobianTanLimit * tan_y);
  f.width = cam.width;
  f.height = cam.height;
  f.tiles_x = (cam.width + kTileSize - 1) / kTileSize;
  f.tiles_y = (cam.height + kTileSize - 1) / kTileSize;
  return f;
}

template <typename T>
std::optional<ProjectedGaussian<T>> project_gaussian(const Gaussian3D& g, int sh_degree,
                                                     const CameraFrame<T>& cam) {
  using V3 = Eigen::Matrix<T, 3, 1>;
  using M3 = Eigen::Matrix<T, 3, 3>;
  const V3 x = g.position.cast<T>();
  const V3 t = cam.world_to_camera * (x - cam.position);
  if (!(t.z() > cam.near_plane)) return std::nullopt;

  const T tz = t.z();
  const T txc = std::clamp(t.x() / tz, -cam.lim_x, cam.lim_x) * tz;
  const T tyc = std::clamp(t.y() / tz, -cam.lim_y, cam.lim_y) * tz;
  Eigen::Matrix<T, 2, 3> jac;
  jac << cam.focal / tz, T(0), -cam.focal * txc / (tz * tz),
      T(0), -cam.focal / tz, cam.focal * tyc / (tz * tz);

  const M3 sigma = covariance3d(g).cast<T>();
  const Eigen::Matrix<T, 2, 3> m = jac * cam.world_to_camera;
  const Eigen::Matrix<T, 2, 2> cov = m * sigma * m.transpose();

  ProjectedGaussian<T> p;
  p.cov_xx = cov(0, 0) + T(kCovarianceFloor);
  p.cov_xy = T(0.5) * (cov(0, 1) + cov(1, 0));
  p.cov_yy = cov(1, 1) + T(kCovarianceFloor);
  const T det = p.cov_xx * p.cov_yy - p.cov_xy * p.cov_xy;
  if (!(det > T(0))) return std::nullopt;
  p.conic_xx = p.cov_yy / det;
  p.conic_xy = -p.cov_xy / det;
  p.conic_yy = p.cov_xx / det;
  p.mean_x = cam.cx + cam.focal * t.x() / tz;
  p.mean_y = cam.cy - cam.focal * t.y() / tz;
  p.depth = tz;

  const T rx = T(3) * std::sqrt(p.cov_xx);
  const T ry = T(3) * std::sqrt(p.cov_yy);
  if (p.mean_x + rx < T(0) || p.mean_x - rx > T(cam.width) || p.mean_y + ry < T(0) ||
      p.mean_y - ry > T(cam.height)) {
    return std::nullopt;
  }
  auto tile_of = [](T v, int tiles) {
    const T tv = std::floor(v / T(kTileSize));
    return static_cast<int>(std::clamp(tv, T(0), T(tiles - 1)));
  };
  p.tile_x0 = tile_of(p.mean_x - rx, cam.tiles_x);
  p.tile_x1 = tile_of(p.mean_x + rx, cam.tiles_x);
  p.tile_y0 = tile_of(p.mean_y - ry, cam.tiles_y);
  p.tile_y1 = tile_of(p.mean_y + ry, cam.tiles_y);

  V3 dir = x - cam.position;
  const T dn = dir.norm();
  if (dn > T(0)) dir /= dn;
  T basis[kMaxShCoeffs];
  sh_basis<T>(sh_degree, dir.data(), basis);
  for (int c = 0; c < 3; ++c) {
    T v = T(0);
    for (int k = 0; k < sh_coeff_count(sh_degree); ++k) v += basis[k] * T(g.sh[k * 3 + c]);
    p.color[c] = std::clamp(v + T(0.5), T(0), T(1));
  }
  p.opacity = T(g.opacity());
  return p;
}

template <typename T>
TileBins<T> bin_gaussians(const SplatScene& scene, const CameraFrame<T>& cam) {
  TileBins<T> bins;
  const int n = static_cast<int>(scene.gaussians.size());
  bins.projected.resize(n);
  parallel_for_each_index(n, [&](int i) {
    bins.projected[i] = project_gaussian(scene.gaussians[i], scene.sh_degree, cam);
  });
  for (int i = 0; i < n; ++i) {
    if (bins.projected[i]) bins.order.push_back(static_cast<std::uint32_t>(i));
  }
  std::sort(bins.order.begin(), bins.order.end(), [&](std::uint32_t a, std::uint32_t b) {
    const T da = bins.projected[a]->depth;
    const T db = bins.projected[b]->depth;
    return da < db || (da == db && a < b);
  });
  bins.tiles.assign(static_cast<std::size_t>(cam.tiles_x) * cam.tiles_y, {});
  for (std::uint32_t k = 0; k < bins.order.size(); ++k) {
    const ProjectedGaussian<T>& p = *bins.projected[bins.order[k]];
    for (int ty = p.tile_y0; ty <= p.tile_y1; ++ty) {
      for (int tx = p.tile_x0; tx <= p.tile_x1; ++tx) {
        bins.tiles[static_cast<std::size_t>(ty) * cam.tiles_x + tx].push_back(k);
      }
    }
  }
  return bins;
}

template <typename T>
T splat_alpha(const ProjectedGaussian<T>& p, T px, T py) {
  const T dx = px - p.mean_x;
  const T dy = py - p.mean_y;
  const T q = p.conic_xx * dx * dx + T(2) * p.conic_xy * dx * dy + p.conic_yy * dy * dy;
  if (!(q <= T(kCutoffMahalanobisSq))) return T(0);
  return std::min(T(kMaxAlpha), p.opacity * std::exp(T(-0.5) * q));
}

template <typename T>
RenderResult render_as(const SplatScene& scene, const PerspectiveCamera& cam) {
  scene.validate();
  if (scene.gaussians.empty()) throw DomainError("render: scene has no gaussians");
  const CameraFrame<T> frame = CameraFrame<T>::make(cam);
  const TileBins<T> bins = bin_gaussians(scene, frame);
  RenderResult out{ImageBuffer(cam.width, cam.height, 3), ImageBuffer(cam.width, cam.height, 1),
                   ImageBuffer(cam.width, cam.height, 1)};
  const T bg[3] = {T(scene.background[0]), T(scene.background[1]), T(scene.background[2])};
  parallel_for_each_index(frame.tiles_x * frame.tiles_y, [&](int tile) {
    const int tx = tile % frame.tiles_x;
    const int ty = tile / frame.tiles_x;
    const auto& list = bins.tiles[tile];
    const int x1 = std::min(cam.width, (tx + 1) * kTileSize);
    const int y1 = std::min(cam.height, (ty + 1) * kTileSize);
    for (int y = ty * kTileSize; y < y1; ++y) {
      for (int x = tx * kTileSize; x < x1; ++x) {
        PixelAccumulator<T> acc;
        const T px = T(x) + T(0.5);
        const T py = T(y) + T(0.5);
        for (std::uint32_t k : list) {
          const ProjectedGaussian<T>& p = *bins.projected[bins.order[k]];
          const T a = splat_alpha(p, px, py);
          if (a == T(0)) continue;
          const T w = a * acc.transmittance;
          for (int c = 0; c < 3; ++c) acc.color[c] += p.color[c] * w;
          acc.depth += p.depth * w;
          acc.transmittance *= T(1) - a;
        }
        for (int c = 0; c < 3; ++c) {
          out.rgb.at(x, y, c) = static_cast<double>(acc.color[c] + bg[c] * acc.transmittance);
        }
        const T covered = T(1) - acc.transmittance;
        out.alpha.at(x, y) = static_cast<double>(covered);
        out.depth.at(x, y) = covered > T(0) ? static_cast<double>(acc.depth / covered) : 0.0;
      }
    }
  });
  return out;
}

RenderResult render(const SplatScene& scene, const PerspectiveCamera& cam) {
  return render_as<float>(scene, cam);
}

CompositeResult composite_pixel(std::span<const CompositeEntry> entries,
                                const Eigen::Vector3d& background) {
  CompositeResult r;
  r.color.setZero();
  double t = 1.0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const CompositeEntry& e = entries[i];
    if (i > 0 && e.depth < entries[i - 1].depth) {
      throw ContractViolation("composite_pixel: entries not sorted front to back");
    }
    if (!(e.alpha >= 0.0 && e.alpha < 1.0)) {
      throw ContractViolation("composite_pixel: alpha outside [0,1)");
    }
    r.color += e.color * (e.alpha * t);
    r.weight_sum += e.alpha * t;
    t *= 1.0 - e.alpha;
  }
  r.color += background * t;
  r.final_transmittance = t;
  return r;
}

#define VERSE3D_INSTANTIATE(T)                                                          \
  template struct CameraFrame<T>;                                                       \
  template std::optional<ProjectedGaussian<T>> project_gaussian<T>(                     \
      const Gaussian3D&, int, const CameraFrame<T>&);                                   \
  template TileBins<T> bin_gaussians<T>(const SplatScene&, const CameraFrame<T>&);      \
  template T splat_alpha<T>(const ProjectedGaussian<T>&, T, T);                         \
  template RenderResult render_as<T>(const SplatScene&, const PerspectiveCamera&);

VERSE3D_INSTANTIATE(float)
VERSE3D_INSTANTIATE(double)
#undef VERSE3D_INSTANTIATE

}  // namespace verse3d
