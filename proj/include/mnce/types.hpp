#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace mnce {

enum class ErrorCode {
  invalid_argument,
  zero_vector,
  dimension_mismatch,
  near_singular,
  beta_not_one,
  degenerate_weight,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

/// Loss hyperparameters: angular margin m1, subtractive margin m2,
/// temperature tau and the partition-term weight beta.
struct MarginParams {
  double m1 = 0.0;
  double m2 = 0.0;
  double tau = 0.25;
  double beta = 1.0;

  void validate() const;

  MarginParams without_margins() const {
    MarginParams p = *this;
    p.m1 = 0.0;
    p.m2 = 0.0;
    return p;
  }
  MarginParams without_m2() const {
    MarginParams p = *this;
    p.m2 = 0.0;
    return p;
  }
};

/// Per-anchor matrix of pairwise angles with {0,1} target probabilities.
/// Row i is anchor i; columns index the candidate (second view) slots.
/// The self column (i,i) participates only when it is the positive.
struct BatchAngles {
  Eigen::MatrixXd angles;   // radians, B x B
  Eigen::MatrixXd targets;  // entries in {0,1}, B x B

  int size() const { return static_cast<int>(angles.rows()); }

  bool included(int i, int j) const {
    return i != j || targets(i, i) == 1.0;
  }

  /// Column of the row's single positive. Throws if the row is not one-hot.
  int positive_col(int i) const;

  bool one_hot() const;

  void validate() const;
};

/// Convenience constructor for the common one-positive-per-row case.
BatchAngles make_batch(const Eigen::MatrixXd& angles,
                       const std::vector<int>& positive_cols);

enum class GradTag { plain, with_margins, scheme_modified };

/// Per-pair angle-space gradient dL_i/dtheta_ij. Excluded pairs hold zero.
struct GradientField {
  Eigen::MatrixXd grad;
  GradTag tag = GradTag::plain;
};

}  // namespace mnce
