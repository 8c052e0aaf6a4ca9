#include "verse3d/splat/init.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <utility>
#include <vector>

#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>

#include "verse3d/core/errors.hpp"
#include "verse3d/core/parallel.hpp"

namespace verse3d {

namespace bg = boost::geometry;
namespace bgi = boost::geometry::index;

namespace {

using BoostPoint = bg::model::point<double, 3, bg::cs::cartesian>;
using Entry = std::pair<BoostPoint, std::uint32_t>;

}  // namespace

SplatScene init_from_pointcloud(const PointCloud& cloud, const InitOptions& opts) {
  if (cloud.count() == 0) throw DomainError("init_from_pointcloud: empty point cloud");
  cloud.validate();
  if (opts.sh_degree < 0 || opts.sh_degree > kMaxShDegree) throw ConfigError("init.sh_degree must be 0..3");
  if (opts.k_neighbors < 1) throw ConfigError("init.k_neighbors must be >= 1");
  if (!(opts.fallback_scale > 0.0)) throw ConfigError("init.fallback_scale must be > 0");
  const double opacity_logit = logit(opts.initial_opacity);

  std::vector<Entry> entries;
  entries.reserve(cloud.count());
  for (std::uint32_t i = 0; i < cloud.count(); ++i) {
    const auto& p = cloud.positions[i];
    entries.emplace_back(BoostPoint(p.x(), p.y(), p.z()), i);
  }
  // The range constructor bulk-loads with the packing algorithm.
  const bgi::rtree<Entry, bgi::quadratic<16>> tree(entries.begin(), entries.end());

  SplatScene scene;
  scene.sh_degree = opts.sh_degree;
  scene.background = opts.background;
  scene.gaussians.resize(cloud.count());
  const unsigned k = static_cast<unsigned>(opts.k_neighbors);
  parallel_for_each_index(static_cast<int>(cloud.count()), [&](int i) {
    const Eigen::Vector3d& p = cloud.positions[i];
    std::vector<Entry> hits;
    tree.query(bgi::nearest(entries[i].first, k + 1), std::back_inserter(hits));
    std::vector<double> dists;
    bool skipped_self = false;
    for (const Entry& e : hits) {
      if (!skipped_self && e.second == static_cast<std::uint32_t>(i)) {
        skipped_self = true;
        continue;
      }
      dists.push_back((cloud.positions[e.second] - p).norm());
    }
    std::sort(dists.begin(), dists.end());
    if (dists.size() > k) dists.resize(k);
    double scale = opts.fallback_scale;
    if (!dists.empty()) {
      double sum = 0.0;
      for (double d : dists) sum += d;
      scale = std::max(sum / static_cast<double>(dists.size()), opts.min_distance);
    }
    Gaussian3D& g = scene.gaussians[i];
    g.position = p;
    g.opacity_logit = opacity_logit;
    g.log_scale = Eigen::Vector3d::Constant(std::log(scale));
    for (int c = 0; c < 3; ++c) g.sh[c] = (cloud.colors[i][c] - 0.5) / kShC0;
  });
  return scene;
}

}  // namespace verse3d
