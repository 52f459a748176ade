#pragma once

#include <utility>

#include "mnce/types.hpp"

namespace mnce {

/// Margin multiplier split for a positive pair: the probability ratio
/// (1-q)/(1-q~) and the sine ratio sin(theta+m1)/sin(theta). The
/// probability term has the same closed form for the row's negatives.
struct MultiplierDecomposition {
  double prob_term = 1.0;
  double sin_term = 1.0;
};

/// Analytic angle-space gradient (p_ij - beta q_ij) sin(theta_ij + m1 p_ij) / tau.
GradientField grad_theta(const BatchAngles& batch, const MarginParams& params);

/// Closed-form multiplier terms at a (theta+, q~+) point. q~+ is the
/// margin-free softmax probability of the positive.
MultiplierDecomposition multiplier_decomposition(double theta_pos,
                                                 double q_tilde_pos,
                                                 const MarginParams& params);

/// Analytic bounds on the attainable margin-free positive probability
/// given batch_size - 1 free negatives. The open interval (low, high).
std::pair<double, double> feasible_qtilde_range(double theta_pos,
                                                int batch_size, double tau);

/// Subtractive-margin gradient in closed form: the m2-free gradient times
/// 1 / (1 - (1 - exp(-m2/tau)) qhat_il), where qhat is the probability
/// with the angular margin kept but the subtractive margin removed.
/// Requires beta = 1 and one-hot targets.
GradientField subtractive_closed_form_grad(const BatchAngles& batch,
                                           const MarginParams& params);

/// m2 -> infinity limit of the positive-pair gradient: sin(theta+ + m1)/tau.
double m2_limit_grad(double theta_pos, const MarginParams& params);

/// Positive-pair angle above which sin(theta + m1) goes negative and the
/// gradient widens the angle instead of closing it: pi - m1.
double sign_reversal_threshold(double m1);

}  // namespace mnce
