#pragma once

#include <Eigen/Dense>

#include "mnce/types.hpp"

namespace mnce {

enum class Scheme {
  none,
  pos_emphasis,
  curvature,
  attenuation_I,
  attenuation_II,
};

/// Gradient-modification scheme and its hyperparameters. c may be
/// +infinity, in which case curvature reduces to pos_emphasis.
struct SchemeConfig {
  Scheme scheme = Scheme::none;
  double s = 1.0;
  double c = std::numeric_limits<double>::infinity();
  double alpha = 0.0;

  void validate() const;
};

/// gamma(x, c) = |(1 - x^c)^(1/c)| with x clamped to [0, 1].
/// gamma(x, inf) is 1 for x < 1 and 0 at x = 1.
double gamma_curve(double x, double c);

/// w_ij = (1 - p_ij) + s p_ij.
Eigen::MatrixXd weight_pos_emphasis(const Eigen::MatrixXd& targets, double s);

/// w_ij = (1 - p_ij) + gamma(theta_ij/pi, c) s p_ij.
Eigen::MatrixXd weight_curvature(const BatchAngles& batch, double s, double c);

/// Alpha matching the subtractive margin m2: 1 - exp(-m2/tau).
double alpha_from_m2(double m2, double tau);

/// Type I: every entry of row i gets 1 / (1 - alpha q~_il), positives and
/// negatives alike. q_tilde holds the margin-free probabilities.
Eigen::MatrixXd weight_attenuation_I(const BatchAngles& batch,
                                     const Eigen::MatrixXd& q_tilde,
                                     double alpha);

/// Type II: negatives get 1, the positive gets 1 / (1 - alpha q~_il).
Eigen::MatrixXd weight_attenuation_II(const BatchAngles& batch,
                                      const Eigen::MatrixXd& q_tilde,
                                      double alpha);

/// Scheme weight matrix at the current batch values. Attenuation schemes
/// require beta != 0 since q~ needs negatives.
Eigen::MatrixXd scheme_weights(const BatchAngles& batch,
                               const MarginParams& params,
                               const SchemeConfig& config);

/// The stop-gradient construction delta w + sg(delta)(1 - w), evaluated
/// numerically as frozen + w (delta - frozen) with `frozen` the detached
/// copy of the logits. At delta == frozen the result is delta bit-for-bit,
/// so forward quantities are unchanged; only gradient flow is rescaled.
Eigen::MatrixXd scaled_logits(const Eigen::MatrixXd& delta,
                              const Eigen::MatrixXd& frozen,
                              const Eigen::MatrixXd& weights);

/// Scheme-modified gradient: w_ij * dL/dtheta_ij with the weights treated
/// as constants under differentiation.
GradientField modified_grad(const BatchAngles& batch,
                            const MarginParams& params,
                            const SchemeConfig& config);

}  // namespace mnce
