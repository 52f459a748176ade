#include "mnce/grad_analysis.hpp"

#include <cmath>

#include "mnce/geometry.hpp"
#include "mnce/loss.hpp"

namespace mnce {

GradientField grad_theta(const BatchAngles& batch, const MarginParams& params) {
  params.validate();
  const int b = batch.size();
  const Eigen::MatrixXd q = probabilities(logits(batch, params));
  GradientField field;
  field.grad = Eigen::MatrixXd::Zero(b, b);
  field.tag = (params.m1 == 0.0 && params.m2 == 0.0) ? GradTag::plain
                                                     : GradTag::with_margins;
  for (int i = 0; i < b; ++i) {
    for (int j = 0; j < b; ++j) {
      if (!batch.included(i, j)) continue;
      const double p = batch.targets(i, j);
      field.grad(i, j) = (p - params.beta * q(i, j)) *
                         std::sin(batch.angles(i, j) + params.m1 * p) /
                         params.tau;
    }
  }
  return field;
}

MultiplierDecomposition multiplier_decomposition(double theta_pos,
                                                 double q_tilde_pos,
                                                 const MarginParams& params) {
  params.validate();
  if (!(q_tilde_pos > 0.0 && q_tilde_pos < 1.0)) {
    throw Error(ErrorCode::invalid_argument,
                "multiplier_decomposition: q~+ must lie in (0, 1)");
  }
  const double sin_theta = std::sin(theta_pos);
  if (sin_theta < kSinSingular) {
    throw Error(ErrorCode::near_singular,
                "multiplier_decomposition: sin(theta+) below 1e-6");
  }
  // Shift of the positive logit by both margins. With only that logit
  // moved, the positive term (1-q)/(1-q~) and the negative term q_h/q~_h
  // share the closed form 1 / (1 + q~+ (exp(shift) - 1)).
  const double shift =
      (std::cos(theta_pos + params.m1) - std::cos(theta_pos) - params.m2) /
      params.tau;
  MultiplierDecomposition d;
  d.prob_term = 1.0 / (1.0 + q_tilde_pos * std::expm1(shift));
  d.sin_term = std::sin(theta_pos + params.m1) / sin_theta;
  return d;
}

std::pair<double, double> feasible_qtilde_range(double theta_pos,
                                                int batch_size, double tau) {
  if (batch_size < 2) {
    throw Error(ErrorCode::invalid_argument,
                "feasible_qtilde_range: batch_size must be >= 2");
  }
  if (!(tau > 0.0)) {
    throw Error(ErrorCode::invalid_argument,
                "feasible_qtilde_range: tau must be > 0");
  }
  const double pos = std::exp(std::cos(theta_pos) / tau);
  const double n = static_cast<double>(batch_size - 1);
  const double low = pos / (pos + n * std::exp(1.0 / tau));
  const double high = pos / (pos + n * std::exp(-1.0 / tau));
  return {low, high};
}

GradientField subtractive_closed_form_grad(const BatchAngles& batch,
                                           const MarginParams& params) {
  params.validate();
  if (params.beta != 1.0) {
    throw Error(ErrorCode::beta_not_one,
                "subtractive_closed_form_grad: requires beta = 1");
  }
  if (!batch.one_hot()) {
    throw Error(ErrorCode::invalid_argument,
                "subtractive_closed_form_grad: requires one-hot targets");
  }
  const int b = batch.size();
  // q with the angular margin kept but m2 removed; with m1 = 0 this is
  // the margin-free q~.
  const Eigen::MatrixXd q_hat =
      probabilities(logits(batch, params.without_m2()));
  const double shrink = -std::expm1(-params.m2 / params.tau);  // 1 - e^(-m2/tau)
  GradientField field;
  field.grad = Eigen::MatrixXd::Zero(b, b);
  field.tag = GradTag::with_margins;
  for (int i = 0; i < b; ++i) {
    const int l = batch.positive_col(i);
    const double factor = 1.0 / (1.0 - shrink * q_hat(i, l));
    for (int j = 0; j < b; ++j) {
      if (!batch.included(i, j)) continue;
      const double p = batch.targets(i, j);
      field.grad(i, j) = (p - q_hat(i, j)) *
                         std::sin(batch.angles(i, j) + params.m1 * p) /
                         params.tau * factor;
    }
  }
  return field;
}

double m2_limit_grad(double theta_pos, const MarginParams& params) {
  params.validate();
  if (params.beta != 1.0) {
    throw Error(ErrorCode::beta_not_one, "m2_limit_grad: requires beta = 1");
  }
  return std::sin(theta_pos + params.m1) / params.tau;
}

double sign_reversal_threshold(double m1) {
  if (!(m1 >= 0.0 && m1 < M_PI)) {
    throw Error(ErrorCode::invalid_argument,
                "sign_reversal_threshold: m1 must lie in [0, pi)");
  }
  return M_PI - m1;
}

}  // namespace mnce
