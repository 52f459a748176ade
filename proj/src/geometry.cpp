#include "mnce/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace mnce {

Eigen::VectorXd normalize(const Eigen::VectorXd& v) {
  const double norm = v.norm();
  if (norm <= 1e-30) {
    throw Error(ErrorCode::zero_vector,
                "normalize: vector norm below 1e-30");
  }
  // Already unit to rounding error: return unchanged, which makes
  // normalize(normalize(v)) == normalize(v) bit-for-bit.
  if (std::fabs(norm - 1.0) < 1e-12) return v;
  return v / norm;
}

double angle(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
  if (u.size() != v.size()) {
    throw Error(ErrorCode::dimension_mismatch,
                "angle: vectors have different dimensions");
  }
  const double dot = u.dot(v);
  const double clamped =
      std::clamp(dot, -1.0 + kCosClampEps, 1.0 - kCosClampEps);
  return std::acos(clamped);
}

Eigen::VectorXd angle_grad_wrt_embedding(const Eigen::VectorXd& u,
                                         const Eigen::VectorXd& v) {
  if (u.size() != v.size()) {
    throw Error(ErrorCode::dimension_mismatch,
                "angle_grad_wrt_embedding: vectors have different dimensions");
  }
  const double dot = std::clamp(u.dot(v), -1.0, 1.0);
  const double sin_theta = std::sqrt(std::max(0.0, 1.0 - dot * dot));
  if (sin_theta < kSinSingular) {
    throw Error(ErrorCode::near_singular,
                "angle_grad_wrt_embedding: pair is near coincident/antipodal");
  }
  // Tangent-space direction at u; orthogonal to u by construction.
  return -(v - dot * u) / sin_theta;
}

}  // namespace mnce
