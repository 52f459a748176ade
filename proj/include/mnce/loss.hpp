#pragma once

#include <Eigen/Dense>

#include "mnce/types.hpp"

namespace mnce {

/// Margin logits delta_ij = (cos(theta_ij + m1 p_ij) - m2 p_ij) / tau.
/// Excluded (self, non-positive) entries are set to -infinity so they
/// drop out of every row softmax and log-sum-exp.
Eigen::MatrixXd logits(const BatchAngles& batch, const MarginParams& params);

/// Row-wise softmax with max subtraction. -infinity entries map to 0.
Eigen::MatrixXd probabilities(const Eigen::MatrixXd& logits);

/// Per-anchor loss L_i = -sum_j p_ij delta_ij + beta sum_j p_ij lse_i
/// evaluated on an explicit logit matrix (used by the stop-gradient
/// forward-invariance path and the finite-difference oracles).
Eigen::VectorXd loss_from_logits(const BatchAngles& batch,
                                 const Eigen::MatrixXd& delta, double beta);

/// Per-anchor generalized margin InfoNCE loss.
Eigen::VectorXd loss(const BatchAngles& batch, const MarginParams& params);

/// Loss of a single anchor row; identical arithmetic to loss()[row].
double loss_row(const BatchAngles& batch, int row, const MarginParams& params);

}  // namespace mnce
