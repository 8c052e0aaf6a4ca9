#include "verse3d/geometry/panorama.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "verse3d/core/errors.hpp"
#include "verse3d/core/parallel.hpp"

namespace verse3d {

namespace {

constexpr double kPi = std::numbers::pi;

void check_pano_dims(int width, int height) {
  if (width < 1 || height < 1) throw DomainError("panorama dimensions must be positive");
}

}  // namespace

Eigen::Vector3d pixel_to_ray(int width, int height, double u, double v) {
  check_pano_dims(width, height);
  if (!(u >= 0.0 && u < width) || !(v >= 0.0 && v < height)) {
    throw DomainError("pixel (" + std::to_string(u) + ", " + std::to_string(v) +
                      ") outside panorama domain");
  }
  const double theta = 2.0 * kPi * (u + 0.5) / width - kPi;
  const double phi = 0.5 * kPi - kPi * (v + 0.5) / height;
  const double c = std::cos(phi);
  Eigen::Vector3d dir(c * std::sin(theta), std::sin(phi), c * std::cos(theta));
  return dir.normalized();
}

PixelCoord ray_to_pixel(const Eigen::Vector3d& dir, int width, int height) {
  check_pano_dims(width, height);
  const double n = dir.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw DomainError("ray_to_pixel: zero or non-finite ray");
  const Eigen::Vector3d d = dir / n;
  const double theta = std::atan2(d.x(), d.z());
  const double phi = std::atan2(d.y(), std::hypot(d.x(), d.z()));
  double u = (theta + kPi) * width / (2.0 * kPi) - 0.5;
  u = std::fmod(u, static_cast<double>(width));
  if (u < 0.0) u += width;
  if (u >= width) u -= width;
  const double v = (0.5 * kPi - phi) * height / kPi - 0.5;
  return {u, v};
}

void sample_direction(const ImageBuffer& pano, const Eigen::Vector3d& dir,
                      std::span<double> out) {
  const PixelCoord p = ray_to_pixel(dir, pano.width(), pano.height());
  sample_bilinear(pano, p.u, p.v, WrapMode::kWrap, WrapMode::kClamp, out);
}

FaceFrame face_frame(CubeFace face) {
  using V = Eigen::Vector3d;
  switch (face) {
    case CubeFace::kPosX: return {V(1, 0, 0), V(0, 0, -1), V(0, 1, 0)};
    case CubeFace::kNegX: return {V(-1, 0, 0), V(0, 0, 1), V(0, 1, 0)};
    case CubeFace::kPosY: return {V(0, 1, 0), V(-1, 0, 0), V(0, 0, 1)};
    case CubeFace::kNegY: return {V(0, -1, 0), V(-1, 0, 0), V(0, 0, -1)};
    case CubeFace::kPosZ: return {V(0, 0, 1), V(1, 0, 0), V(0, 1, 0)};
    case CubeFace::kNegZ: return {V(0, 0, -1), V(-1, 0, 0), V(0, 1, 0)};
  }
  throw DomainError("invalid cube face");
}

CubeMap::CubeMap(std::array<ImageBuffer, 6> faces) : faces_(std::move(faces)) {
  const int size = faces_[0].width();
  const int ch = faces_[0].channels();
  for (const ImageBuffer& f : faces_) {
    if (f.width() != size || f.height() != size || f.channels() != ch) {
      throw DomainError("cube faces must be square with equal size and channels");
    }
  }
}

Eigen::Vector3d cube_pixel_direction(CubeFace face, int face_size, double i, double j) {
  const FaceFrame f = face_frame(face);
  const double a = 2.0 * (i + 0.5) / face_size - 1.0;
  const double b = 2.0 * (j + 0.5) / face_size - 1.0;
  return f.forward + a * f.right - b * f.up;
}

CubeCoord direction_to_cube(const Eigen::Vector3d& dir, int face_size) {
  const double ax = std::abs(dir.x());
  const double ay = std::abs(dir.y());
  const double az = std::abs(dir.z());
  CubeFace face;
  if (ax >= ay && ax >= az) {
    face = dir.x() >= 0.0 ? CubeFace::kPosX : CubeFace::kNegX;
  } else if (ay >= az) {
    face = dir.y() >= 0.0 ? CubeFace::kPosY : CubeFace::kNegY;
  } else {
    face = dir.z() >= 0.0 ? CubeFace::kPosZ : CubeFace::kNegZ;
  }
  const FaceFrame f = face_frame(face);
  const Eigen::Vector3d p = dir / dir.dot(f.forward);
  const double a = p.dot(f.right);
  const double b = -p.dot(f.up);
  return {face, (a + 1.0) * 0.5 * face_size - 0.5, (b + 1.0) * 0.5 * face_size - 0.5};
}

CubeMap pano_to_cubemap(const PanoImage& pano, int face_size) {
  if (face_size < 1) throw DomainError("face_size must be >= 1");
  const int ch = pano.channels();
  std::array<ImageBuffer, 6> faces;
  for (int k = 0; k < 6; ++k) {
    const auto face = static_cast<CubeFace>(k);
    ImageBuffer img(face_size, face_size, ch);
    parallel_for_each_index(face_size, [&](int j) {
      double sample[3];
      for (int i = 0; i < face_size; ++i) {
        sample_direction(pano.buffer(), cube_pixel_direction(face, face_size, i, j),
                         std::span<double>(sample, ch));
        for (int c = 0; c < ch; ++c) img.at(i, j, c) = sample[c];
      }
    });
    faces[k] = std::move(img);
  }
  return CubeMap(std::move(faces));
}

PanoImage cubemap_to_pano(const CubeMap& cube, int width, int height, int supersample) {
  if (width != 2 * height) throw DomainError("cubemap_to_pano: width must equal 2*height");
  if (supersample < 1) throw DomainError("supersample must be >= 1");
  const int ch = cube.channels();
  const int s = cube.face_size();
  ImageBuffer out(width, height, ch);
  const double inv = 1.0 / supersample;
  parallel_for_each_index(height, [&](int y) {
    double acc[3];
    double sample[3];
    for (int x = 0; x < width; ++x) {
      std::fill(acc, acc + ch, 0.0);
      for (int sy = 0; sy < supersample; ++sy) {
        for (int sx = 0; sx < supersample; ++sx) {
          const double u = x - 0.5 + (sx + 0.5) * inv;
          const double v = y - 0.5 + (sy + 0.5) * inv;
          const double uw = u < 0.0 ? u + width : u;
          const double vc = std::clamp(v, 0.0, std::nextafter(static_cast<double>(height), 0.0));
          const CubeCoord cc = direction_to_cube(pixel_to_ray(width, height, uw, vc), s);
          sample_bilinear(cube.face(cc.face), cc.x, cc.y, WrapMode::kClamp, WrapMode::kClamp,
                          std::span<double>(sample, ch));
          for (int c = 0; c < ch; ++c) acc[c] += sample[c];
        }
      }
      for (int c = 0; c < ch; ++c) out.at(x, y, c) = acc[c] * inv * inv;
    }
  });
  return PanoImage(std::move(out));
}

ImageBuffer central_face_mask(int width, int height) {
  ImageBuffer mask(width, height, 1, 1.0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Eigen::Vector3d d = pixel_to_ray(width, height, x, y);
      if (direction_to_cube(d, 1).face == kCentralFace) mask.at(x, y) = 0.0;
    }
  }
  return mask;
}

std::vector<Eigen::Vector3d> icosahedron_face_centers() {
  const double g = std::numbers::phi;
  std::vector<Eigen::Vector3d> v;
  for (double a : {-1.0, 1.0}) {
    for (double b : {-g, g}) {
      v.emplace_back(0.0, a, b);
      v.emplace_back(a, b, 0.0);
      v.emplace_back(b, 0.0, a);
    }
  }
  // Edge length is 2; faces are the vertex triples that are pairwise adjacent.
  auto adjacent = [&](int i, int j) { return std::abs((v[i] - v[j]).norm() - 2.0) < 1e-9; };
  std::vector<Eigen::Vector3d> centers;
  const int n = static_cast<int>(v.size());
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (!adjacent(i, j)) continue;
      for (int k = j + 1; k < n; ++k) {
        if (adjacent(i, k) && adjacent(j, k)) centers.push_back((v[i] + v[j] + v[k]).normalized());
      }
    }
  }
  return centers;
}

std::vector<PerspectiveCamera> tangent_cameras(int count, double face_fov, int resolution) {
  if (count != kTangentCount) {
    throw ConfigError("tangent_cameras: only the 20-view icosahedral layout is supported (got " +
                      std::to_string(count) + ")");
  }
  if (!(face_fov > 0.0 && face_fov < kPi)) throw ConfigError("tangent_cameras: face_fov out of range");
  if (resolution < 1) throw ConfigError("tangent_cameras: resolution must be positive");
  std::vector<PerspectiveCamera> cams;
  for (const Eigen::Vector3d& c : icosahedron_face_centers()) {
    PerspectiveCamera cam;
    cam.orientation = look_rotation(c);
    cam.fov_x = face_fov;
    cam.width = resolution;
    cam.height = resolution;
    cams.push_back(cam);
  }
  return cams;
}

bool in_frustum(const PerspectiveCamera& cam, const Eigen::Vector3d& dir) {
  const Eigen::Vector3d t = cam.world_to_camera() * dir;
  if (t.z() <= 0.0) return false;
  const double f = cam.focal();
  const double px = cam.cx() + f * t.x() / t.z();
  const double py = cam.cy() - f * t.y() / t.z();
  return px >= 0.0 && px <= cam.width && py >= 0.0 && py <= cam.height;
}

ImageBuffer project_pano_to_view(const PanoImage& pano, const PerspectiveCamera& cam) {
  cam.validate();
  const int ch = pano.channels();
  ImageBuffer out(cam.width, cam.height, ch);
  parallel_for_each_index(cam.height, [&](int y) {
    double sample[3];
    for (int x = 0; x < cam.width; ++x) {
      sample_direction(pano.buffer(), cam.ray_direction(x + 0.5, y + 0.5),
                       std::span<double>(sample, ch));
      for (int c = 0; c < ch; ++c) out.at(x, y, c) = sample[c];
    }
  });
  return out;
}

PanoImage stitch_views(std::span<const ImageBuffer> views,
                       std::span<const PerspectiveCamera> cameras, int width, int height) {
  if (views.empty() || views.size() != cameras.size()) {
    throw DomainError("stitch_views: need one view per camera");
  }
  const int ch = views[0].channels();
  ImageBuffer out(width, height, ch);
  std::vector<Eigen::Vector3d> axes;
  for (const auto& cam : cameras) axes.push_back(cam.forward());
  parallel_for_each_index(height, [&](int y) {
    double sample[3];
    for (int x = 0; x < width; ++x) {
      const Eigen::Vector3d d = pixel_to_ray(width, height, x, y);
      std::size_t best = 0;
      for (std::size_t k = 1; k < axes.size(); ++k) {
        if (axes[k].dot(d) > axes[best].dot(d)) best = k;
      }
      Eigen::Vector2d px;
      double depth = 0.0;
      cameras[best].project(cameras[best].position + d, px, depth);
      sample_bilinear(views[best], px.x() - 0.5, px.y() - 0.5, WrapMode::kClamp,
                      WrapMode::kClamp, std::span<double>(sample, ch));
      for (int c = 0; c < ch; ++c) out.at(x, y, c) = sample[c];
    }
  });
  return PanoImage(std::move(out));
}

}  // namespace verse3d
