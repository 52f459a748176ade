#include "mnce/loss.hpp"

#include <cmath>
#include <limits>

namespace mnce {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Row log-sum-exp over included entries, max-subtraction stabilized.
// Summation is fixed left-to-right so row-parallel evaluation stays
// order-independent.
double row_logsumexp(const Eigen::MatrixXd& delta, int i) {
  const int b = static_cast<int>(delta.cols());
  double m = kNegInf;
  for (int j = 0; j < b; ++j) {
    if (delta(i, j) > m) m = delta(i, j);
  }
  double sum = 0.0;
  for (int j = 0; j < b; ++j) {
    sum += std::exp(delta(i, j) - m);  // exp(-inf) = 0 drops excluded entries
  }
  return m + std::log(sum);
}

Eigen::RowVectorXd row_logits(const BatchAngles& batch, int i,
                              const MarginParams& params) {
  const int b = batch.size();
  Eigen::RowVectorXd delta(b);
  for (int j = 0; j < b; ++j) {
    if (!batch.included(i, j)) {
      delta(j) = kNegInf;
      continue;
    }
    const double p = batch.targets(i, j);
    delta(j) =
        (std::cos(batch.angles(i, j) + params.m1 * p) - params.m2 * p) /
        params.tau;
  }
  return delta;
}

double row_loss_from_logits(const BatchAngles& batch, int i,
                            const Eigen::MatrixXd& delta, double beta) {
  const int b = batch.size();
  double dot = 0.0;
  double p_sum = 0.0;
  for (int j = 0; j < b; ++j) {
    const double p = batch.targets(i, j);
    if (p != 0.0) {
      dot += p * delta(i, j);
      p_sum += p;
    }
  }
  return -dot + beta * p_sum * row_logsumexp(delta, i);
}

}  // namespace

Eigen::MatrixXd logits(const BatchAngles& batch, const MarginParams& params) {
  params.validate();
  const int b = batch.size();
  Eigen::MatrixXd delta(b, b);
  for (int i = 0; i < b; ++i) {
    delta.row(i) = row_logits(batch, i, params);
  }
  return delta;
}

Eigen::MatrixXd probabilities(const Eigen::MatrixXd& logits) {
  const int b = static_cast<int>(logits.rows());
  Eigen::MatrixXd q(b, logits.cols());
  for (int i = 0; i < b; ++i) {
    double m = kNegInf;
    for (int j = 0; j < logits.cols(); ++j) {
      if (logits(i, j) > m) m = logits(i, j);
    }
    double denom = 0.0;
    for (int j = 0; j < logits.cols(); ++j) {
      q(i, j) = std::exp(logits(i, j) - m);
      denom += q(i, j);
    }
    for (int j = 0; j < logits.cols(); ++j) {
      q(i, j) /= denom;
    }
  }
  return q;
}

Eigen::VectorXd loss_from_logits(const BatchAngles& batch,
                                 const Eigen::MatrixXd& delta, double beta) {
  const int b = batch.size();
  Eigen::VectorXd out(b);
  for (int i = 0; i < b; ++i) {
    out(i) = row_loss_from_logits(batch, i, delta, beta);
  }
  return out;
}

Eigen::VectorXd loss(const BatchAngles& batch, const MarginParams& params) {
  const int b = batch.size();
  Eigen::VectorXd out(b);
  for (int i = 0; i < b; ++i) {
    out(i) = loss_row(batch, i, params);
  }
  return out;
}

double loss_row(const BatchAngles& batch, int row,
                const MarginParams& params) {
  params.validate();
  const int b = batch.size();
  Eigen::MatrixXd delta(1, b);
  delta.row(0) = row_logits(batch, row, params);
  double dot = 0.0;
  double p_sum = 0.0;
  for (int j = 0; j < b; ++j) {
    const double p = batch.targets(row, j);
    if (p != 0.0) {
      dot += p * delta(0, j);
      p_sum += p;
    }
  }
  return -dot + params.beta * p_sum * row_logsumexp(delta, 0);
}

}  // namespace mnce
