#include "mnce/types.hpp"

#include <cmath>

namespace mnce {

void MarginParams::validate() const {
  if (!(tau > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "MarginParams: tau must be > 0");
  }
  if (!(m1 >= 0.0 && m1 < M_PI)) {
    throw Error(ErrorCode::invalid_argument,
                "MarginParams: m1 must lie in [0, pi)");
  }
  if (!(m2 >= 0.0)) {
    throw Error(ErrorCode::invalid_argument, "MarginParams: m2 must be >= 0");
  }
  if (!(beta >= 0.0 && beta <= 1.0)) {
    throw Error(ErrorCode::invalid_argument,
                "MarginParams: beta must lie in [0, 1]");
  }
}

int BatchAngles::positive_col(int i) const {
  int col = -1;
  for (int j = 0; j < size(); ++j) {
    if (targets(i, j) == 1.0) {
      if (col >= 0) {
        throw Error(ErrorCode::invalid_argument,
                    "BatchAngles: row has more than one positive");
      }
      col = j;
    } else if (targets(i, j) != 0.0) {
      throw Error(ErrorCode::invalid_argument,
                  "BatchAngles: targets must be 0 or 1");
    }
  }
  if (col < 0) {
    throw Error(ErrorCode::invalid_argument,
                "BatchAngles: row has no positive");
  }
  return col;
}

bool BatchAngles::one_hot() const {
  for (int i = 0; i < size(); ++i) {
    int count = 0;
    for (int j = 0; j < size(); ++j) {
      const double p = targets(i, j);
      if (p == 1.0) {
        ++count;
      } else if (p != 0.0) {
        return false;
      }
    }
    if (count != 1) return false;
  }
  return true;
}

void BatchAngles::validate() const {
  if (angles.rows() != angles.cols() || targets.rows() != targets.cols() ||
      angles.rows() != targets.rows()) {
    throw Error(ErrorCode::dimension_mismatch,
                "BatchAngles: angles and targets must be square and equal");
  }
  for (int i = 0; i < size(); ++i) {
    for (int j = 0; j < size(); ++j) {
      const double t = angles(i, j);
      if (!(t >= 0.0 && t <= M_PI)) {
        throw Error(ErrorCode::invalid_argument,
                    "BatchAngles: angles must lie in [0, pi]");
      }
    }
  }
}

BatchAngles make_batch(const Eigen::MatrixXd& angles,
                       const std::vector<int>& positive_cols) {
  const int b = static_cast<int>(angles.rows());
  if (static_cast<int>(positive_cols.size()) != b) {
    throw Error(ErrorCode::dimension_mismatch,
                "make_batch: one positive column per row required");
  }
  BatchAngles batch;
  batch.angles = angles;
  batch.targets = Eigen::MatrixXd::Zero(b, b);
  for (int i = 0; i < b; ++i) {
    const int l = positive_cols[i];
    if (l < 0 || l >= b) {
      throw Error(ErrorCode::invalid_argument,
                  "make_batch: positive column out of range");
    }
    batch.targets(i, l) = 1.0;
  }
  batch.validate();
  return batch;
}

}  // namespace mnce
