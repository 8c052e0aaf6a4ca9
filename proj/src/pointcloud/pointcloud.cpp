#include "verse3d/pointcloud/pointcloud.hpp"

#include <algorithm>
#include <cmath>

#include "verse3d/core/errors.hpp"
#include "verse3d/core/parallel.hpp"
#include "verse3d/core/ply.hpp"
#include "verse3d/geometry/panorama.hpp"

namespace verse3d {

void PointCloud::validate() const {
  if (positions.size() != colors.size()) throw DomainError("point cloud: positions/colors mismatch");
  for (const auto& p : positions) {
    if (!p.allFinite()) throw DomainError("point cloud: non-finite coordinate");
  }
}

void DepthCalibration::validate() const {
  if (!(near_depth > 0.0) || !(near_depth < far_depth)) {
    throw ConfigError("depth calibration requires 0 < near < far");
  }
}

PanoImage calibrate_depth(const PanoImage& depth, const DepthCalibration& calib) {
  calib.validate();
  if (depth.channels() != 1) throw DomainError("calibrate_depth: depth must be single-channel");
  depth.buffer().validate_depth();
  if (calib.mode == DepthMode::kMetricPassthrough) return depth;
  const auto data = depth.buffer().data();
  const auto [lo, hi] = std::minmax_element(data.begin(), data.end());
  if (!(*hi > *lo)) throw DegenerateInputError("calibrate_depth: constant depth image");
  const double a = (calib.far_depth - calib.near_depth) / (*hi - *lo);
  const double min = *lo;
  ImageBuffer out(depth.width(), depth.height(), 1);
  for (std::size_t i = 0; i < data.size(); ++i) {
    out.data()[i] = calib.near_depth + a * (data[i] - min);
  }
  return PanoImage(std::move(out));
}

PointCloud depth_pano_to_points(const PanoImage& rgb, const PanoImage& depth,
                                const DepthCalibration& calib) {
  if (rgb.width() != depth.width() || rgb.height() != depth.height()) {
    throw DomainError("depth_pano_to_points: rgb and depth dimensions differ");
  }
  if (rgb.channels() != 3) throw DomainError("depth_pano_to_points: rgb must have 3 channels");
  for (double v : depth.buffer().data()) {
    if (!std::isfinite(v)) throw DomainError("depth_pano_to_points: non-finite depth");
  }
  const PanoImage r = calibrate_depth(depth, calib);
  const int w = rgb.width();
  const int h = rgb.height();
  PointCloud cloud;
  cloud.positions.resize(static_cast<std::size_t>(w) * h);
  cloud.colors.resize(cloud.positions.size());
  parallel_for_each_index(h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const double d = std::max(r.buffer().at(x, y), calib.near_depth);
      cloud.positions[i] = d * pixel_to_ray(w, h, x, y);
      cloud.colors[i] = {rgb.buffer().at(x, y, 0), rgb.buffer().at(x, y, 1),
                         rgb.buffer().at(x, y, 2)};
    }
  });
  return cloud;
}

PointCloud subsample(const PointCloud& cloud, int stride) {
  if (stride < 1) throw DomainError("subsample: stride must be >= 1");
  PointCloud out;
  for (std::size_t i = 0; i < cloud.count(); i += static_cast<std::size_t>(stride)) {
    out.positions.push_back(cloud.positions[i]);
    out.colors.push_back(cloud.colors[i]);
  }
  return out;
}

void write_point_cloud(const std::filesystem::path& path, const PointCloud& cloud) {
  cloud.validate();
  PlyTable t;
  for (const char* n : {"x", "y", "z"}) t.add_property(n, PlyType::kFloat64);
  for (const char* n : {"red", "green", "blue"}) t.add_property(n, PlyType::kFloat32);
  t.values.reserve(cloud.count() * 6);
  for (std::size_t i = 0; i < cloud.count(); ++i) {
    for (int k = 0; k < 3; ++k) t.values.push_back(cloud.positions[i][k]);
    for (int k = 0; k < 3; ++k) t.values.push_back(cloud.colors[i][k]);
  }
  write_ply(path, t);
}

PointCloud read_point_cloud(const std::filesystem::path& path) {
  const PlyTable t = read_ply(path);
  const std::size_t cx = t.column("x"), cy = t.column("y"), cz = t.column("z");
  const std::size_t cr = t.column("red"), cg = t.column("green"), cb = t.column("blue");
  // 8-bit colors from other tools are rescaled to [0,1].
  const double scale = t.types[cr] == PlyType::kUint8 ? 1.0 / 255.0 : 1.0;
  PointCloud cloud;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    cloud.positions.emplace_back(t.at(r, cx), t.at(r, cy), t.at(r, cz));
    cloud.colors.emplace_back(t.at(r, cr) * scale, t.at(r, cg) * scale, t.at(r, cb) * scale);
  }
  cloud.validate();
  return cloud;
}

}  // namespace verse3d
