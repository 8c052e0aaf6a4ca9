#pragma once

#include <array>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "verse3d/core/image.hpp"
#include "verse3d/geometry/camera.hpp"

namespace verse3d {

// Equirectangular convention
// --------------------------
// Pixel-index coordinates (u, v): u = i samples pixel column i at its center.
//   longitude theta = 2*pi*(u + 0.5)/W - pi        (across the width)
//   latitude  phi   = pi/2 - pi*(v + 0.5)/H        (row 0 is the north pole)
//   dir = (cos(phi) sin(theta), sin(phi), cos(phi) cos(theta))
// World +Y is up and the panorama center (u = W/2 - 0.5) looks along +Z.
// Sampling is bilinear with horizontal wrap and vertical clamp.

struct PixelCoord {
  double u = 0.0;
  double v = 0.0;
};

/// Unit ray through pixel-index coordinate (u, v); 0 <= u < W, 0 <= v < H.
Eigen::Vector3d pixel_to_ray(int width, int height, double u, double v);

/// Inverse of pixel_to_ray; u is wrapped into [0, W).
PixelCoord ray_to_pixel(const Eigen::Vector3d& dir, int width, int height);

/// Bilinear panorama lookup along a world direction; `out` has one entry per
/// channel.
void sample_direction(const ImageBuffer& pano, const Eigen::Vector3d& dir, std::span<double> out);

// Cube map
// --------
// Face order is +X, -X, +Y, -Y, +Z, -Z. For face pixel (i, j) with
// a = 2(i + 0.5)/S - 1 (right) and b = 2(j + 0.5)/S - 1 (down), the direction is
// forward + a*right - b*up with:
//
//   face  forward   right   up
//   +X    (+1,0,0)  -Z      +Y
//   -X    (-1,0,0)  +Z      +Y
//   +Y    (0,+1,0)  -X      +Z
//   -Y    (0,-1,0)  -X      -Z
//   +Z    (0,0,+1)  +X      +Y
//   -Z    (0,0,-1)  -X      +Y     <- central "front" face
//
// The equatorial faces read left-to-right in the same sense as the panorama,
// and the +Y/-Y faces join the front face seamlessly along its top/bottom edges.

enum class CubeFace : int { kPosX = 0, kNegX = 1, kPosY = 2, kNegY = 3, kPosZ = 4, kNegZ = 5 };
inline constexpr CubeFace kCentralFace = CubeFace::kNegZ;

struct FaceFrame {
  Eigen::Vector3d forward;
  Eigen::Vector3d right;
  Eigen::Vector3d up;
};
FaceFrame face_frame(CubeFace face);

class CubeMap {
 public:
  CubeMap() = default;
  /// All faces must be square and share one size and channel count.
  explicit CubeMap(std::array<ImageBuffer, 6> faces);

  int face_size() const noexcept { return faces_[0].width(); }
  int channels() const noexcept { return faces_[0].channels(); }
  const ImageBuffer& face(CubeFace f) const noexcept { return faces_[static_cast<int>(f)]; }
  ImageBuffer& face(CubeFace f) noexcept { return faces_[static_cast<int>(f)]; }
  const ImageBuffer& central() const noexcept { return face(kCentralFace); }

 private:
  std::array<ImageBuffer, 6> faces_;
};

/// Direction through the center of face pixel (i, j) (not normalized).
Eigen::Vector3d cube_pixel_direction(CubeFace face, int face_size, double i, double j);

/// Face containing a direction and its pixel-index coordinates on that face.
struct CubeCoord {
  CubeFace face;
  double x;
  double y;
};
CubeCoord direction_to_cube(const Eigen::Vector3d& dir, int face_size);

CubeMap pano_to_cubemap(const PanoImage& pano, int face_size);

/// Resamples a cube map into a W x H panorama. `supersample` > 1 averages a
/// supersample x supersample grid of rays per output pixel.
PanoImage cubemap_to_pano(const CubeMap& cube, int width, int height, int supersample = 1);

/// Panorama-space mask: 0 where the direction falls on the central face
/// (preserved), 1 elsewhere (to be synthesized).
ImageBuffer central_face_mask(int width, int height);

// Tangent cameras
// ---------------
inline constexpr int kTangentCount = 20;
/// Default square field of view of a tangent camera, radians (80 degrees).
inline constexpr double kDefaultTangentFov = 1.3962634015954636;

/// Unit directions through the 20 icosahedron face centers.
std::vector<Eigen::Vector3d> icosahedron_face_centers();

/// 20 square cameras at the origin, each looking through one icosahedron
/// face center. Throws ConfigError for any count other than 20.
std::vector<PerspectiveCamera> tangent_cameras(int count = kTangentCount,
                                               double face_fov = kDefaultTangentFov,
                                               int resolution = 256);

/// True when a world direction projects inside the camera's image rectangle.
bool in_frustum(const PerspectiveCamera& cam, const Eigen::Vector3d& dir);

/// Perspective view of the panorama; only the camera orientation and
/// intrinsics are used (the panorama is treated as infinitely distant).
ImageBuffer project_pano_to_view(const PanoImage& pano, const PerspectiveCamera& cam);

/// Re-stitches perspective views into a panorama. Each output pixel samples the
/// view whose optical axis is closest to its ray.
PanoImage stitch_views(std::span<const ImageBuffer> views,
                       std::span<const PerspectiveCamera> cameras, int width, int height);

}  // namespace verse3d
