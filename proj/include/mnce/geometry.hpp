#pragma once

#include <Eigen/Dense>

#include "mnce/types.hpp"

namespace mnce {

// Clamp applied to cosines before arccos. Keeps d(arccos) finite while
// perturbing the angle by less than 5e-4 rad.
inline constexpr double kCosClampEps = 1e-7;

// Below this sine the tangent-space gradient is treated as singular.
inline constexpr double kSinSingular = 1e-6;

/// Rescale v to unit Euclidean norm. Throws zero_vector if the norm is
/// at or below 1e-30.
Eigen::VectorXd normalize(const Eigen::VectorXd& v);

/// Angle between two unit vectors, arccos of the clamped dot product.
double angle(const Eigen::VectorXd& u, const Eigen::VectorXd& v);

/// d(theta)/d(u) restricted to the tangent space of the sphere at u:
///   -(v - (u.v) u) / sin(theta).
/// Throws near_singular for coincident or antipodal pairs.
Eigen::VectorXd angle_grad_wrt_embedding(const Eigen::VectorXd& u,
                                         const Eigen::VectorXd& v);

}  // namespace mnce
