#include "verse3d/splat/gaussian.hpp"

#include <algorithm>
#include <cmath>

#include <unsupported/Eigen/AutoDiff>

#include "verse3d/core/errors.hpp"

namespace verse3d {

namespace {

constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                          -1.0925484305920792, 0.5462742152960396};
constexpr double kC3[] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                          0.3731763325901154, -0.4570457994644658, 1.445305721320277,
                          -0.5900435899266435};

}  // namespace

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("logit: probability must lie in (0,1)");
  return std::log(p / (1.0 - p));
}

double Gaussian3D::opacity() const { return sigmoid(opacity_logit); }

void SplatScene::validate() const {
  if (sh_degree < 0 || sh_degree > kMaxShDegree) throw DomainError("sh_degree must be 0..3");
  if (!background.allFinite() || background.minCoeff() < 0.0 || background.maxCoeff() > 1.0) {
    throw DomainError("background must be RGB in [0,1]");
  }
  for (const Gaussian3D& g : gaussians) {
    bool finite = g.position.allFinite() && std::isfinite(g.opacity_logit) &&
                  g.log_scale.allFinite() && g.rotation.allFinite();
    for (double v : g.sh) finite = finite && std::isfinite(v);
    if (!finite) throw DomainError("gaussian parameters must be finite");
    if (g.rotation.norm() == 0.0) throw DomainError("gaussian quaternion must be nonzero");
  }
}

Eigen::Matrix3d rotation_matrix(const Eigen::Vector4d& q) {
  const double n = q.norm();
  if (!(n > 0.0)) throw DomainError("rotation_matrix: zero quaternion");
  const double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
  Eigen::Matrix3d r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Eigen::Matrix3d covariance3d(const Gaussian3D& g) {
  const Eigen::Matrix3d r = rotation_matrix(g.rotation);
  const Eigen::Vector3d var = (2.0 * g.log_scale).array().exp();
  Eigen::Matrix3d sigma = r * var.asDiagonal() * r.transpose();
  return 0.5 * (sigma + sigma.transpose());
}

template <typename Scalar>
void sh_basis(int degree, const Scalar* dir, Scalar* out) {
  const Scalar x = dir[0], y = dir[1], z = dir[2];
  out[0] = Scalar(kShC0);
  if (degree < 1) return;
  out[1] = -Scalar(kC1) * y;
  out[2] = Scalar(kC1) * z;
  out[3] = -Scalar(kC1) * x;
  if (degree < 2) return;
  const Scalar xx = x * x, yy = y * y, zz = z * z;
  out[4] = Scalar(kC2[0]) * x * y;
  out[5] = Scalar(kC2[1]) * y * z;
  out[6] = Scalar(kC2[2]) * (Scalar(2) * zz - xx - yy);
  out[7] = Scalar(kC2[3]) * x * z;
  out[8] = Scalar(kC2[4]) * (xx - yy);
  if (degree < 3) return;
  out[9] = Scalar(kC3[0]) * y * (Scalar(3) * xx - yy);
  out[10] = Scalar(kC3[1]) * x * y * z;
  out[11] = Scalar(kC3[2]) * y * (Scalar(4) * zz - xx - yy);
  out[12] = Scalar(kC3[3]) * z * (Scalar(2) * zz - Scalar(3) * xx - Scalar(3) * yy);
  out[13] = Scalar(kC3[4]) * x * (Scalar(4) * zz - xx - yy);
  out[14] = Scalar(kC3[5]) * z * (xx - yy);
  out[15] = Scalar(kC3[6]) * x * (xx - Scalar(3) * yy);
}

template void sh_basis<float>(int, const float*, float*);
template void sh_basis<double>(int, const double*, double*);

void sh_basis_with_jacobian(int degree, const Eigen::Vector3d& dir, double* values,
                            double* jacobian) {
  using Ad = Eigen::AutoDiffScalar<Eigen::Vector3d>;
  Ad d[3];
  for (int j = 0; j < 3; ++j) d[j] = Ad(dir[j], 3, j);
  Ad out[kMaxShCoeffs];
  sh_basis<Ad>(degree, d, out);
  for (int k = 0; k < sh_coeff_count(degree); ++k) {
    values[k] = out[k].value();
    for (int j = 0; j < 3; ++j) {
      jacobian[k * 3 + j] = out[k].derivatives().size() == 3 ? out[k].derivatives()[j] : 0.0;
    }
  }
}

Eigen::Vector3d sh_to_color(std::span<const double> sh, const Eigen::Vector3d& dir, int degree) {
  if (degree < 0 || degree > kMaxShDegree) throw DomainError("sh degree must be 0..3");
  if (sh.size() < static_cast<std::size_t>(3 * sh_coeff_count(degree))) {
    throw DomainError("sh_to_color: too few coefficients");
  }
  double basis[kMaxShCoeffs];
  sh_basis<double>(degree, dir.data(), basis);
  Eigen::Vector3d rgb;
  for (int c = 0; c < 3; ++c) {
    double v = 0.0;
    for (int k = 0; k < sh_coeff_count(degree); ++k) v += basis[k] * sh[k * 3 + c];
    rgb[c] = std::clamp(v + 0.5, 0.0, 1.0);
  }
  return rgb;
}

}  // namespace verse3d
