#include "mnce/verification.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "mnce/geometry.hpp"
#include "mnce/grad_analysis.hpp"
#include "mnce/loss.hpp"

namespace mnce {

namespace {

void check_step(double step) {
  if (!(step >= 1e-8 && step <= 1e-4)) {
    throw Error(ErrorCode::invalid_argument,
                "finite difference step must lie in [1e-8, 1e-4]");
  }
}

void check_angles_interior(const BatchAngles& batch, double step) {
  for (int i = 0; i < batch.size(); ++i) {
    for (int j = 0; j < batch.size(); ++j) {
      const double t = batch.angles(i, j);
      if (t < 2.0 * step || t > M_PI - 2.0 * step) {
        throw Error(ErrorCode::invalid_argument,
                    "finite difference requires angles 2*step away from "
                    "{0, pi}");
      }
    }
  }
}

// Row loss re-derived from scratch in extended precision. The oracle
// shares no code with the analytic path, and the extra mantissa bits keep
// the differencing rounding error well below the h^2 truncation term.
long double row_loss_ld(const BatchAngles& batch, int row,
                        const MarginParams& params,
                        const Eigen::MatrixXd* frozen_logits,
                        const Eigen::MatrixXd* frozen_weights) {
  const int b = batch.size();
  std::vector<long double> delta(b,
                                 -std::numeric_limits<long double>::infinity());
  for (int j = 0; j < b; ++j) {
    if (!batch.included(row, j)) continue;
    const long double p = batch.targets(row, j);
    long double d = (cosl(static_cast<long double>(batch.angles(row, j)) +
                          static_cast<long double>(params.m1) * p) -
                     static_cast<long double>(params.m2) * p) /
                    static_cast<long double>(params.tau);
    if (frozen_weights != nullptr) {
      const long double f = (*frozen_logits)(row, j);
      d = f + static_cast<long double>((*frozen_weights)(row, j)) * (d - f);
    }
    delta[j] = d;
  }
  long double max_d = -std::numeric_limits<long double>::infinity();
  for (int j = 0; j < b; ++j) {
    if (delta[j] > max_d) max_d = delta[j];
  }
  long double sum = 0.0L;
  for (int j = 0; j < b; ++j) sum += expl(delta[j] - max_d);
  const long double lse = max_d + logl(sum);
  long double dot = 0.0L;
  long double p_sum = 0.0L;
  for (int j = 0; j < b; ++j) {
    const long double p = batch.targets(row, j);
    if (p != 0.0L) {
      dot += p * delta[j];
      p_sum += p;
    }
  }
  return -dot + static_cast<long double>(params.beta) * p_sum * lse;
}

// Central difference of L_row with respect to angles(row, col). Only the
// row's loss depends on that entry, so the difference of the full batch
// loss reduces to the difference of that single row.
double central_diff_entry(BatchAngles batch, int row, int col,
                          const MarginParams& params,
                          const Eigen::MatrixXd* frozen_logits,
                          const Eigen::MatrixXd* frozen_weights, double step) {
  const double center = batch.angles(row, col);
  long double plus = 0.0L;
  long double minus = 0.0L;
  for (int side = 0; side < 2; ++side) {
    batch.angles(row, col) = side == 0 ? center + step : center - step;
    (side == 0 ? plus : minus) =
        row_loss_ld(batch, row, params, frozen_logits, frozen_weights);
  }
  return static_cast<double>((plus - minus) /
                             (2.0L * static_cast<long double>(step)));
}

GradientField finite_diff_impl(const BatchAngles& batch,
                               const MarginParams& params,
                               const Eigen::MatrixXd* frozen_weights,
                               double step, GradTag tag) {
  check_step(step);
  check_angles_interior(batch, step);
  const int b = batch.size();
  // The stop-gradient copy is detached at the center point; it must not
  // move with the perturbed angle.
  Eigen::MatrixXd frozen_logits;
  if (frozen_weights != nullptr) frozen_logits = logits(batch, params);
  GradientField field;
  field.grad = Eigen::MatrixXd::Zero(b, b);
  field.tag = tag;
  for (int i = 0; i < b; ++i) {
    for (int j = 0; j < b; ++j) {
      if (!batch.included(i, j)) continue;
      field.grad(i, j) = central_diff_entry(batch, i, j, params,
                                            &frozen_logits, frozen_weights,
                                            step);
    }
  }
  return field;
}

struct ErrorStats {
  double max_abs = 0.0;
  double max_rel = 0.0;
  long cases = 0;

  // Relative error with an absolute floor so near-zero entries do not
  // blow up the ratio.
  void add(double got, double want, double abs_floor) {
    const double abs_err = std::fabs(got - want);
    const double scale = std::max(std::fabs(want), abs_floor);
    max_abs = std::max(max_abs, abs_err);
    max_rel = std::max(max_rel, abs_err / scale);
    ++cases;
  }
};

CheckReport make_report(const std::string& name, const ErrorStats& stats,
                        double tolerance, bool use_rel) {
  CheckReport r;
  r.name = name;
  r.max_abs_err = stats.max_abs;
  r.max_rel_err = stats.max_rel;
  r.cases = stats.cases;
  r.tolerance = tolerance;
  r.passed = (use_rel ? stats.max_rel : stats.max_abs) < tolerance;
  return r;
}

constexpr double kFdStep = 1e-6;
constexpr double kFdTol = 1e-6;
// Absolute floor 1e-9: an entry passes when abs_err < max(kFdTol |g|,
// 1e-9), i.e. the relative error denominator is floored at 1e-9/kFdTol.
constexpr double kFdFloor = 1e-9 / kFdTol;

CheckReport fd_check(const std::string& name, const MarginParams& params,
                     const SchemeConfig& scheme, Rng& rng) {
  ErrorStats stats;
  for (int b : {2, 4, 16}) {
    for (int rep = 0; rep < 4; ++rep) {
      const BatchAngles batch = random_batch(b, rng);
      const GradientField analytic = modified_grad(batch, params, scheme);
      const GradientField fd =
          finite_diff_modified_grad(batch, params, scheme, kFdStep);
      for (int i = 0; i < b; ++i) {
        for (int j = 0; j < b; ++j) {
          if (!batch.included(i, j)) continue;
          stats.add(analytic.grad(i, j), fd.grad(i, j), kFdFloor);
        }
      }
    }
  }
  return make_report(name, stats, kFdTol, true);
}

CheckReport decomposition_check(Rng& rng) {
  const std::vector<std::pair<double, double>> margin_pairs = {
      {0.1, 0.4}, {0.5, 0.7}, {0.2, 0.0}};
  ErrorStats stats;
  for (const auto& [m1, m2] : margin_pairs) {
    MarginParams with;
    with.m1 = m1;
    with.m2 = m2;
    for (int rep = 0; rep < 10; ++rep) {
      const BatchAngles batch = random_batch(8, rng);
      const Eigen::MatrixXd q_tilde =
          probabilities(logits(batch, with.without_margins()));
      const GradientField plain =
          grad_theta(batch, with.without_margins());
      const GradientField margin = grad_theta(batch, with);
      for (int i = 0; i < batch.size(); ++i) {
        const int l = batch.positive_col(i);
        const MultiplierDecomposition d =
            multiplier_decomposition(batch.angles(i, l), q_tilde(i, l), with);
        for (int j = 0; j < batch.size(); ++j) {
          if (!batch.included(i, j)) continue;
          // Negatives only pick up the shared probability term; the sine
          // ratio is 1 because m1 gates on p.
          const double sin_term = (j == l) ? d.sin_term : 1.0;
          stats.add(margin.grad(i, j),
                    plain.grad(i, j) * d.prob_term * sin_term, 1e-30);
        }
      }
    }
  }
  return make_report("decomposition_identity", stats, 1e-10, false);
}

CheckReport closed_form_check(Rng& rng) {
  ErrorStats stats;
  for (double m2 : {0.0, 0.4, 0.7, 5.0}) {
    MarginParams params;
    params.m1 = 0.1;
    params.m2 = m2;
    for (int rep = 0; rep < 13; ++rep) {
      const BatchAngles batch = random_batch(6, rng);
      const GradientField direct = grad_theta(batch, params);
      const GradientField closed =
          subtractive_closed_form_grad(batch, params);
      for (int i = 0; i < batch.size(); ++i) {
        for (int j = 0; j < batch.size(); ++j) {
          if (!batch.included(i, j)) continue;
          stats.add(closed.grad(i, j), direct.grad(i, j), 1e-30);
        }
      }
    }
  }
  return make_report("subtractive_closed_form", stats, 1e-10, false);
}

CheckReport m2_limit_check(Rng& rng) {
  MarginParams params;
  params.m1 = 0.1;
  params.m2 = 50.0;
  ErrorStats stats;
  for (int rep = 0; rep < 20; ++rep) {
    const BatchAngles batch = random_batch(8, rng);
    const GradientField direct = grad_theta(batch, params);
    for (int i = 0; i < batch.size(); ++i) {
      const int l = batch.positive_col(i);
      stats.add(direct.grad(i, l),
                m2_limit_grad(batch.angles(i, l), params), 1e-30);
    }
  }
  return make_report("m2_limit", stats, 1e-8, false);
}

// Two explicit softmax evaluations (positive logit shifted vs not)
// against the shared closed form 1 / (1 + q~+ (e^shift - 1)).
CheckReport prob_term_symmetry_check(Rng& rng) {
  ErrorStats stats;
  MarginParams params;
  params.m1 = 0.2;
  params.m2 = 0.3;
  for (int rep = 0; rep < 40; ++rep) {
    const BatchAngles batch = random_batch(8, rng);
    const Eigen::MatrixXd q_tilde =
        probabilities(logits(batch, params.without_margins()));
    const Eigen::MatrixXd q = probabilities(logits(batch, params));
    for (int i = 0; i < batch.size(); ++i) {
      const int l = batch.positive_col(i);
      const MultiplierDecomposition d =
          multiplier_decomposition(batch.angles(i, l), q_tilde(i, l), params);
      stats.add((1.0 - q(i, l)) / (1.0 - q_tilde(i, l)), d.prob_term, 1e-30);
      for (int j = 0; j < batch.size(); ++j) {
        if (j == l || !batch.included(i, j)) continue;
        stats.add(q(i, j) / q_tilde(i, j), d.prob_term, 1e-30);
      }
    }
  }
  return make_report("prob_term_symmetry", stats, 1e-12, false);
}

CheckReport feasibility_check(std::uint64_t seed) {
  const double theta = M_PI / 2.0;
  const int b = 256;
  const double tau = 0.25;
  const auto [lo, hi] = feasible_qtilde_range(theta, b, tau);
  const auto [emp_lo, emp_hi] =
      mc_feasibility_check(theta, b, tau, 100000, seed);
  CheckReport r;
  r.name = "mc_feasibility";
  r.cases = 100000;
  r.tolerance = 0.0;
  // "Error" here is how far the empirical extremes stray outside the
  // analytic open interval; any positive value is a failure.
  r.max_abs_err = std::max({0.0, lo - emp_lo, emp_hi - hi});
  r.max_rel_err = r.max_abs_err;
  r.passed = emp_lo > lo && emp_hi < hi;
  return r;
}

CheckReport sign_reversal_check(Rng& rng) {
  ErrorStats stats;
  MarginParams with;
  with.m1 = 0.2;
  int flipped = 0;
  int total = 0;
  for (int rep = 0; rep < 20; ++rep) {
    BatchAngles batch = random_batch(4, rng);
    const int l = batch.positive_col(0);
    batch.angles(0, l) = M_PI - 0.1;  // above pi - m1
    const GradientField wide = grad_theta(batch, with);
    const GradientField base = grad_theta(batch, with.without_margins());
    ++total;
    if (wide.grad(0, l) * base.grad(0, l) < 0.0) ++flipped;
  }
  stats.cases = total;
  stats.max_abs = static_cast<double>(total - flipped);
  stats.max_rel = stats.max_abs;
  CheckReport r = make_report("sign_reversal", stats, 0.5, false);
  return r;
}

CheckReport angle_grad_fd_check(Rng& rng) {
  ErrorStats stats;
  for (int rep = 0; rep < 50; ++rep) {
    const int d = 3 + rng.uniform_int(5);
    Eigen::VectorXd u(d), v(d), t(d);
    for (int k = 0; k < d; ++k) u(k) = rng.gaussian();
    for (int k = 0; k < d; ++k) v(k) = rng.gaussian();
    u = normalize(u);
    v = normalize(v);
    const double theta = angle(u, v);
    if (theta < 0.01 || theta > M_PI - 0.01) continue;
    // random tangent direction at u
    for (int k = 0; k < d; ++k) t(k) = rng.gaussian();
    t -= t.dot(u) * u;
    t = normalize(t);
    const double h = 1e-6;
    const double fd =
        (angle(normalize(u + h * t), v) - angle(normalize(u - h * t), v)) /
        (2.0 * h);
    const double analytic = angle_grad_wrt_embedding(u, v).dot(t);
    stats.add(analytic, fd, 1e-9);
  }
  return make_report("angle_grad_fd", stats, 1e-5, true);
}

CheckReport forward_invariance_check(Rng& rng) {
  ErrorStats stats;
  MarginParams params;
  params.m1 = 0.1;
  params.m2 = 0.2;
  std::vector<SchemeConfig> schemes(4);
  schemes[0].scheme = Scheme::pos_emphasis;
  schemes[0].s = 20.0;
  schemes[1].scheme = Scheme::curvature;
  schemes[1].s = 10.0;
  schemes[1].c = 1.5;
  schemes[2].scheme = Scheme::attenuation_I;
  schemes[2].alpha = 0.5;
  schemes[3].scheme = Scheme::attenuation_II;
  schemes[3].alpha = 0.5;
  for (int rep = 0; rep < 10; ++rep) {
    const BatchAngles batch = random_batch(8, rng);
    const Eigen::MatrixXd delta = logits(batch, params);
    const Eigen::VectorXd base = loss_from_logits(batch, delta, params.beta);
    for (const SchemeConfig& scheme : schemes) {
      const Eigen::MatrixXd w = scheme_weights(batch, params, scheme);
      const Eigen::VectorXd scaled =
          loss_from_logits(batch, scaled_logits(delta, delta, w), params.beta);
      for (int i = 0; i < batch.size(); ++i) {
        stats.add(scaled(i), base(i), 1e-30);
      }
    }
  }
  return make_report("forward_invariance", stats, 1e-15, false);
}

CheckReport scheme_equivalence_check(Rng& rng) {
  // attenuation type I with alpha = 1 - exp(-m2/tau) against the m2
  // gradient, margins-zero base.
  ErrorStats stats;
  for (double m2 : {0.2, 0.4, 1.0}) {
    MarginParams base;
    MarginParams with_m2;
    with_m2.m2 = m2;
    SchemeConfig scheme;
    scheme.scheme = Scheme::attenuation_I;
    scheme.alpha = alpha_from_m2(m2, base.tau);
    for (int rep = 0; rep < 10; ++rep) {
      const BatchAngles batch = random_batch(8, rng);
      const GradientField margin = grad_theta(batch, with_m2);
      const GradientField scaled = modified_grad(batch, base, scheme);
      for (int i = 0; i < batch.size(); ++i) {
        for (int j = 0; j < batch.size(); ++j) {
          if (!batch.included(i, j)) continue;
          stats.add(scaled.grad(i, j), margin.grad(i, j), 1e-30);
        }
      }
    }
  }
  return make_report("attenuation_I_vs_m2", stats, 1e-10, false);
}

CheckReport diminishing_gradient_check() {
  // With margins 0 and beta = 1, |grad| shrinks monotonically as q -> p
  // along a fixed angle.
  MarginParams params;
  long violations = 0;
  long cases = 0;
  for (double theta : {0.3, 1.0, M_PI / 2.0, 2.5}) {
    for (double p : {0.0, 1.0}) {
      double prev = -1.0;
      for (int k = 0; k <= 100; ++k) {
        const double q = p == 1.0 ? k / 100.0 : (100 - k) / 1000.0;
        const double g =
            std::fabs((p - params.beta * q) * std::sin(theta) / params.tau);
        if (prev >= 0.0 && g > prev + 1e-15) ++violations;
        prev = g;
        ++cases;
      }
    }
  }
  CheckReport r;
  r.name = "diminishing_gradient";
  r.cases = cases;
  r.max_abs_err = static_cast<double>(violations);
  r.max_rel_err = r.max_abs_err;
  r.tolerance = 0.5;
  r.passed = violations == 0;
  return r;
}

}  // namespace

GradientField finite_diff_grad(const BatchAngles& batch,
                               const MarginParams& params, double step) {
  params.validate();
  return finite_diff_impl(batch, params, nullptr, step,
                          GradTag::with_margins);
}

GradientField finite_diff_modified_grad(const BatchAngles& batch,
                                        const MarginParams& params,
                                        const SchemeConfig& config,
                                        double step) {
  params.validate();
  if (config.scheme == Scheme::none) {
    return finite_diff_grad(batch, params, step);
  }
  const Eigen::MatrixXd w = scheme_weights(batch, params, config);
  return finite_diff_impl(batch, params, &w, step, GradTag::scheme_modified);
}

std::pair<double, double> mc_feasibility_check(double theta_pos,
                                               int batch_size, double tau,
                                               long trials,
                                               std::uint64_t seed) {
  if (trials < 10000) {
    throw Error(ErrorCode::invalid_argument,
                "mc_feasibility_check: trials must be >= 1e4");
  }
  if (batch_size < 2) {
    throw Error(ErrorCode::invalid_argument,
                "mc_feasibility_check: batch_size must be >= 2");
  }
  Rng rng(mix64(seed));
  const double pos = std::exp(std::cos(theta_pos) / tau);
  double lo = 1.0;
  double hi = 0.0;
  for (long t = 0; t < trials; ++t) {
    double denom = pos;
    for (int h = 0; h < batch_size - 1; ++h) {
      denom += std::exp(std::cos(rng.uniform(0.0, M_PI)) / tau);
    }
    const double q = pos / denom;
    lo = std::min(lo, q);
    hi = std::max(hi, q);
  }
  return {lo, hi};
}

BatchAngles random_batch(int size, Rng& rng) {
  Eigen::MatrixXd angles(size, size);
  std::vector<int> positives(size);
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      angles(i, j) = rng.uniform(0.05, M_PI - 0.05);
    }
    positives[i] = rng.uniform_int(size);
  }
  return make_batch(angles, positives);
}

std::vector<CheckReport> run_all_checks(std::uint64_t seed) {
  std::vector<CheckReport> reports;
  Rng rng(mix64(seed));

  MarginParams plain;
  reports.push_back(fd_check("fd_plain", plain, SchemeConfig{}, rng));

  MarginParams margins;
  margins.m1 = 0.2;
  margins.m2 = 0.4;
  reports.push_back(fd_check("fd_margins", margins, SchemeConfig{}, rng));

  MarginParams byol;
  byol.beta = 0.0;
  reports.push_back(fd_check("fd_beta_zero", byol, SchemeConfig{}, rng));

  MarginParams half;
  half.beta = 0.5;
  reports.push_back(fd_check("fd_beta_half", half, SchemeConfig{}, rng));

  SchemeConfig pos;
  pos.scheme = Scheme::pos_emphasis;
  pos.s = 20.0;
  reports.push_back(fd_check("fd_pos_emphasis", plain, pos, rng));

  SchemeConfig curv;
  curv.scheme = Scheme::curvature;
  curv.s = 10.0;
  curv.c = 1.5;
  reports.push_back(fd_check("fd_curvature", plain, curv, rng));

  SchemeConfig att1;
  att1.scheme = Scheme::attenuation_I;
  att1.alpha = 0.5;
  reports.push_back(fd_check("fd_attenuation_I", plain, att1, rng));

  SchemeConfig att2;
  att2.scheme = Scheme::attenuation_II;
  att2.alpha = 0.5;
  reports.push_back(fd_check("fd_attenuation_II", plain, att2, rng));

  reports.push_back(decomposition_check(rng));
  reports.push_back(closed_form_check(rng));
  reports.push_back(m2_limit_check(rng));
  reports.push_back(prob_term_symmetry_check(rng));
  reports.push_back(scheme_equivalence_check(rng));
  reports.push_back(forward_invariance_check(rng));
  reports.push_back(sign_reversal_check(rng));
  reports.push_back(angle_grad_fd_check(rng));
  reports.push_back(feasibility_check(mix64(seed ^ 0xFEA51B1EULL)));
  reports.push_back(diminishing_gradient_check());
  return reports;
}

std::string format_reports_text(const std::vector<CheckReport>& reports) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-26s %12s %12s %8s %10s %6s\n", "check",
                "max_abs_err", "max_rel_err", "cases", "tolerance", "pass");
  out << line;
  for (const CheckReport& r : reports) {
    std::snprintf(line, sizeof(line), "%-26s %12.3e %12.3e %8ld %10.1e %6s\n",
                  r.name.c_str(), r.max_abs_err, r.max_rel_err, r.cases,
                  r.tolerance, r.passed ? "ok" : "FAIL");
    out << line;
  }
  return out.str();
}

std::string format_reports_csv(const std::vector<CheckReport>& reports) {
  std::ostringstream out;
  out << "name,max_abs_err,max_rel_err,cases,passed\n";
  char line[256];
  for (const CheckReport& r : reports) {
    std::snprintf(line, sizeof(line), "%s,%.9g,%.9g,%ld,%d\n", r.name.c_str(),
                  r.max_abs_err, r.max_rel_err, r.cases, r.passed ? 1 : 0);
    out << line;
  }
  return out.str();
}

}  // namespace mnce
