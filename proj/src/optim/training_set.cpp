#include "verse3d/optim/training_set.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "verse3d/core/errors.hpp"
#include "verse3d/core/hash.hpp"
#include "verse3d/geometry/panorama.hpp"

namespace verse3d {

void PerturbationConfig::validate() const {
  if (!(base_range > 0.0)) throw ConfigError("perturbation.base_range must be > 0");
  if (lambdas.empty()) throw ConfigError("perturbation.lambdas must be non-empty");
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (!(lambdas[i] > 0.0)) throw ConfigError("perturbation.lambdas must be positive");
    if (i > 0 && !(lambdas[i] > lambdas[i - 1])) {
      throw ConfigError("perturbation.lambdas must be strictly increasing");
    }
  }
  if (views_per_stage < 0) throw ConfigError("perturbation.views_per_stage must be >= 0");
}

Eigen::Vector3d perturbation_offset(double lambda, Rng& rng, double base_range) {
  const double r = base_range * lambda;
  Eigen::Vector3d off;
  // |2u - 1| <= 1 exactly, so the bound holds without rounding slack.
  for (int k = 0; k < 3; ++k) off[k] = (2.0 * rng.uniform() - 1.0) * r;
  return off;
}

PerspectiveCamera perturb_camera(const PerspectiveCamera& base, double lambda, Rng& rng,
                                 double base_range) {
  if (!(lambda > 0.0)) throw DomainError("perturb_camera: lambda must be positive");
  PerspectiveCamera cam = base;
  cam.position += perturbation_offset(lambda, rng, base_range);
  return cam;
}

ImageBuffer warp_panorama(const PanoImage& pano, const PanoImage& depth, const PerspectiveCamera& cam) {
  cam.validate();
  if (pano.width() != depth.width() || pano.height() != depth.height() || depth.channels() != 1) {
    throw DomainError("warp_panorama: depth must be single-channel and match the panorama");
  }
  const int w = pano.width(), h = pano.height(), ch = pano.channels();
  ImageBuffer out(cam.width, cam.height, ch);
  std::vector<double> zbuf(static_cast<std::size_t>(cam.width) * cam.height,
                           std::numeric_limits<double>::infinity());
  const double f = cam.focal();
  const double pixel_angle = 2.0 * std::numbers::pi / w;
  // Sequential raster order with a strict depth test keeps the result
  // independent of any scheduling.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double d = depth.buffer().at(x, y);
      if (!(d > 0.0)) continue;
      const Eigen::Vector3d point = d * pixel_to_ray(w, h, x, y);
      Eigen::Vector2d px;
      double z = 0.0;
      if (!cam.project(point, px, z) || z <= cam.near_plane) continue;
      const double footprint = f * pixel_angle * d / z;
      const int half = std::clamp(static_cast<int>(std::floor(0.5 * footprint)), 0, 3);
      const int cx = static_cast<int>(std::floor(px.x()));
      const int cy = static_cast<int>(std::floor(px.y()));
      for (int yy = cy - half; yy <= cy + half; ++yy) {
        if (yy < 0 || yy >= cam.height) continue;
        for (int xx = cx - half; xx <= cx + half; ++xx) {
          if (xx < 0 || xx >= cam.width) continue;
          double& zb = zbuf[static_cast<std::size_t>(yy) * cam.width + xx];
          if (z < zb) {
            zb = z;
            for (int c = 0; c < ch; ++c) out.at(xx, yy, c) = pano.buffer().at(x, y, c);
          }
        }
      }
    }
  }
  double sample[3];
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      if (std::isfinite(zbuf[static_cast<std::size_t>(y) * cam.width + x])) continue;
      sample_direction(pano.buffer(), cam.ray_direction(x + 0.5, y + 0.5), std::span(sample, ch));
      for (int c = 0; c < ch; ++c) out.at(x, y, c) = sample[c];
    }
  }
  return out;
}

std::vector<TrainView> build_training_set(const PanoImage& pano, const PanoImage& depth,
                                          const std::vector<PerspectiveCamera>& tangents,
                                          const PerturbationConfig& cfg) {
  cfg.validate();
  if (tangents.empty()) throw DomainError("build_training_set: no tangent cameras");
  if (pano.channels() != 3) throw DomainError("build_training_set: panorama must be RGB");
  pano.buffer().validate_color();
  std::vector<TrainView> views;
  for (const PerspectiveCamera& cam : tangents) {
    views.push_back({cam, project_pano_to_view(pano, cam), kTangentStage, 0.0});
  }
  if (cfg.views_per_stage == 0) return views;
  depth.buffer().validate_depth();
  std::size_t next = 0;
  for (std::size_t s = 0; s < cfg.lambdas.size(); ++s) {
    for (int v = 0; v < cfg.views_per_stage; ++v) {
      // Each camera draws from its own stream so views are independent of
      // how many came before.
      Rng rng(hash_combine(cfg.seed, hash_combine(s, static_cast<std::uint64_t>(v))));
      const PerspectiveCamera cam =
          perturb_camera(tangents[next++ % tangents.size()], cfg.lambdas[s], rng, cfg.base_range);
      views.push_back({cam, warp_panorama(pano, depth, cam), static_cast<int>(s) + 1, cfg.lambdas[s]});
    }
  }
  return views;
}

}  // namespace verse3d
