#pragma once

#include <array>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace verse3d {

inline constexpr int kMaxShDegree = 3;
inline constexpr int kMaxShCoeffs = 16;

/// Number of SH basis functions for a degree: (degree + 1)^2.
constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

/// DC basis constant; color = C0 * dc + 0.5 for a degree-0 gaussian.
inline constexpr double kShC0 = 0.28209479177387814;

/// One splat. Opacity and scale are unconstrained (logit, log) so the optimizer
/// can step freely; the quaternion is normalized wherever it is used.
///
/// SH coefficients are band-major with RGB interleaved: sh[k * 3 + c] is basis
/// function k, channel c. Entries past the scene degree are ignored and kept 0.
struct Gaussian3D {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double opacity_logit = 0.0;
  std::array<double, 3 * kMaxShCoeffs> sh{};
  Eigen::Vector3d log_scale = Eigen::Vector3d::Zero();
  Eigen::Vector4d rotation{1.0, 0.0, 0.0, 0.0};  // w, x, y, z

  double opacity() const;
  bool operator==(const Gaussian3D&) const = default;
};

struct SplatScene {
  std::vector<Gaussian3D> gaussians;
  int sh_degree = 2;
  Eigen::Vector3d background = Eigen::Vector3d::Zero();

  /// Throws DomainError on a bad degree, non-finite parameters, a zero
  /// quaternion, or a background outside [0,1].
  void validate() const;
  bool operator==(const SplatScene&) const = default;
};

double sigmoid(double x);
double logit(double p);

/// Rotation matrix of q / |q| (w, x, y, z). Throws DomainError for |q| = 0.
Eigen::Matrix3d rotation_matrix(const Eigen::Vector4d& q);

/// R diag(exp(2 s)) R^T.
Eigen::Matrix3d covariance3d(const Gaussian3D& g);

/// Real SH basis values Y_0..Y_{(degree+1)^2 - 1} at a unit direction, in the
/// sign convention used by common splatting renderers.
template <typename Scalar>
void sh_basis(int degree, const Scalar* dir, Scalar* out);

/// Basis values and their derivatives d Y_k / d dir_j (row-major k * 3 + j).
void sh_basis_with_jacobian(int degree, const Eigen::Vector3d& dir, double* values,
                            double* jacobian);

/// clamp(sum_k Y_k(dir) sh_k + 0.5, 0, 1) per channel.
Eigen::Vector3d sh_to_color(std::span<const double> sh, const Eigen::Vector3d& dir, int degree);

}  // namespace verse3d
