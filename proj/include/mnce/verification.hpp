#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mnce/grad_mods.hpp"
#include "mnce/rng.hpp"
#include "mnce/types.hpp"

namespace mnce {

/// Outcome of one named oracle check.
struct CheckReport {
  std::string name;
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  long cases = 0;
  double tolerance = 0.0;
  bool passed = false;
};

/// Central finite difference (L(theta+h) - L(theta-h)) / 2h per pair,
/// each evaluation through the full loss path. step must lie in
/// [1e-8, 1e-4] and angles at least 2*step away from {0, pi}.
GradientField finite_diff_grad(const BatchAngles& batch,
                               const MarginParams& params, double step);

/// Same oracle for scheme-modified gradients: the scheme weights are
/// frozen at the center point and the loss is evaluated through the
/// stop-gradient logit construction.
GradientField finite_diff_modified_grad(const BatchAngles& batch,
                                        const MarginParams& params,
                                        const SchemeConfig& config,
                                        double step);

/// Monte-Carlo probe of the attainable q~+ range: negative angles drawn
/// uniform in [0, pi], trials >= 1e4. Returns (empirical min, max).
std::pair<double, double> mc_feasibility_check(double theta_pos, int batch_size,
                                               double tau, long trials,
                                               std::uint64_t seed);

/// Random batch with angles uniform in [0.05, pi-0.05] and a random
/// one-hot positive per row. Shared by the check suite and tests.
BatchAngles random_batch(int size, Rng& rng);

/// Runs every registered oracle check with the fixed seed.
std::vector<CheckReport> run_all_checks(std::uint64_t seed);

std::string format_reports_text(const std::vector<CheckReport>& reports);
std::string format_reports_csv(const std::vector<CheckReport>& reports);

}  // namespace mnce
