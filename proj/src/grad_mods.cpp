#include "mnce/grad_mods.hpp"

#include <cmath>

#include "mnce/grad_analysis.hpp"
#include "mnce/loss.hpp"

namespace mnce {

void SchemeConfig::validate() const {
  if (!(s >= 0.0)) {
    throw Error(ErrorCode::invalid_argument, "SchemeConfig: s must be >= 0");
  }
  if (!(c > 0.0)) {  // +inf allowed
    throw Error(ErrorCode::invalid_argument, "SchemeConfig: c must be > 0");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error(ErrorCode::invalid_argument,
                "SchemeConfig: alpha must lie in [0, 1]");
  }
}

double gamma_curve(double x, double c) {
  if (!(c > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "gamma_curve: c must be > 0");
  }
  if (x < 0.0) x = 0.0;
  if (x > 1.0) x = 1.0;
  if (std::isinf(c)) {
    return x < 1.0 ? 1.0 : 0.0;
  }
  return std::fabs(std::pow(1.0 - std::pow(x, c), 1.0 / c));
}

Eigen::MatrixXd weight_pos_emphasis(const Eigen::MatrixXd& targets, double s) {
  const long rows = targets.rows();
  const long cols = targets.cols();
  Eigen::MatrixXd w(rows, cols);
  for (long i = 0; i < rows; ++i) {
    for (long j = 0; j < cols; ++j) {
      const double p = targets(i, j);
      w(i, j) = (1.0 - p) + s * p;
    }
  }
  return w;
}

Eigen::MatrixXd weight_curvature(const BatchAngles& batch, double s, double c) {
  const int b = batch.size();
  Eigen::MatrixXd w(b, b);
  for (int i = 0; i < b; ++i) {
    for (int j = 0; j < b; ++j) {
      const double p = batch.targets(i, j);
      w(i, j) =
          (1.0 - p) + gamma_curve(batch.angles(i, j) / M_PI, c) * s * p;
    }
  }
  return w;
}

double alpha_from_m2(double m2, double tau) {
  if (!(m2 >= 0.0) || !(tau > 0.0)) {
    throw Error(ErrorCode::invalid_argument,
                "alpha_from_m2: requires m2 >= 0 and tau > 0");
  }
  return -std::expm1(-m2 / tau);
}

namespace {

double attenuation_row_factor(const BatchAngles& batch,
                              const Eigen::MatrixXd& q_tilde, double alpha,
                              int row) {
  const int l = batch.positive_col(row);
  const double denom = 1.0 - alpha * q_tilde(row, l);
  if (denom <= 1e-12) {
    throw Error(ErrorCode::degenerate_weight,
                "attenuation weight: 1 - alpha q~_il below 1e-12");
  }
  return 1.0 / denom;
}

}  // namespace

Eigen::MatrixXd weight_attenuation_I(const BatchAngles& batch,
                                     const Eigen::MatrixXd& q_tilde,
                                     double alpha) {
  const int b = batch.size();
  Eigen::MatrixXd w(b, b);
  for (int i = 0; i < b; ++i) {
    w.row(i).setConstant(attenuation_row_factor(batch, q_tilde, alpha, i));
  }
  return w;
}

Eigen::MatrixXd weight_attenuation_II(const BatchAngles& batch,
                                      const Eigen::MatrixXd& q_tilde,
                                      double alpha) {
  const int b = batch.size();
  Eigen::MatrixXd w = Eigen::MatrixXd::Ones(b, b);
  for (int i = 0; i < b; ++i) {
    w(i, batch.positive_col(i)) =
        attenuation_row_factor(batch, q_tilde, alpha, i);
  }
  return w;
}

Eigen::MatrixXd scheme_weights(const BatchAngles& batch,
                               const MarginParams& params,
                               const SchemeConfig& config) {
  config.validate();
  switch (config.scheme) {
    case Scheme::none:
      return Eigen::MatrixXd::Ones(batch.size(), batch.size());
    case Scheme::pos_emphasis:
      return weight_pos_emphasis(batch.targets, config.s);
    case Scheme::curvature:
      return weight_curvature(batch, config.s, config.c);
    case Scheme::attenuation_I:
    case Scheme::attenuation_II: {
      if (params.beta == 0.0) {
        throw Error(ErrorCode::invalid_argument,
                    "attenuation schemes need negatives: beta must be "
                    "non-zero");
      }
      const Eigen::MatrixXd q_tilde =
          probabilities(logits(batch, params.without_margins()));
      return config.scheme == Scheme::attenuation_I
                 ? weight_attenuation_I(batch, q_tilde, config.alpha)
                 : weight_attenuation_II(batch, q_tilde, config.alpha);
    }
  }
  throw Error(ErrorCode::invalid_argument, "scheme_weights: unknown scheme");
}

Eigen::MatrixXd scaled_logits(const Eigen::MatrixXd& delta,
                              const Eigen::MatrixXd& frozen,
                              const Eigen::MatrixXd& weights) {
  Eigen::MatrixXd out(delta.rows(), delta.cols());
  for (long i = 0; i < delta.rows(); ++i) {
    for (long j = 0; j < delta.cols(); ++j) {
      const double d = delta(i, j);
      // Excluded entries stay -inf; the blend would produce NaN there.
      out(i, j) = std::isfinite(d)
                      ? frozen(i, j) + weights(i, j) * (d - frozen(i, j))
                      : d;
    }
  }
  return out;
}

GradientField modified_grad(const BatchAngles& batch,
                            const MarginParams& params,
                            const SchemeConfig& config) {
  GradientField base = grad_theta(batch, params);
  if (config.scheme == Scheme::none) {
    return base;
  }
  const Eigen::MatrixXd w = scheme_weights(batch, params, config);
  base.grad = w.cwiseProduct(base.grad);
  base.tag = GradTag::scheme_modified;
  return base;
}

}  // namespace mnce
