// Acceptance suite: one line per criterion, nonzero exit if any fails.
// argv[1] must be the path to the margin-infonce CLI binary (used by the
// determinism criterion).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mnce/grad_analysis.hpp"
#include "mnce/grad_mods.hpp"
#include "mnce/loss.hpp"
#include "mnce/rng.hpp"
#include "mnce/simulator.hpp"
#include "mnce/verification.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool ok = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

// ---- criterion 1: analytic gradient vs finite differences ----

Outcome check_gradient_fd() {
  const auto start = Clock::now();
  mnce::Rng rng(2024);
  const int sizes[] = {2, 4, 16, 64};
  const double betas[] = {1.0, 0.5, 0.0};
  double max_rel = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const int b = sizes[rep % 4];
    mnce::MarginParams params;
    params.m1 = rng.uniform(0.0, 0.6);
    params.m2 = rng.uniform(0.0, 1.0);
    params.beta = betas[rep % 3];
    const mnce::BatchAngles batch = mnce::random_batch(b, rng);
    const Eigen::MatrixXd an = mnce::grad_theta(batch, params).grad;
    const Eigen::MatrixXd fd =
        mnce::finite_diff_grad(batch, params, 1e-6).grad;
    for (int i = 0; i < b; ++i) {
      for (int j = 0; j < b; ++j) {
        if (!batch.included(i, j)) continue;
        // relative error with a 1e-9 absolute floor at tolerance 1e-6
        const double rel = std::fabs(an(i, j) - fd(i, j)) /
                           std::max(std::fabs(fd(i, j)), 1e-3);
        max_rel = std::max(max_rel, rel);
      }
    }
  }
  const double elapsed = seconds_since(start);
  return {max_rel < 1e-6 && elapsed < 10.0,
          "200 batches, max_rel=" + fmt(max_rel) + ", " + fmt(elapsed) + "s"};
}

// ---- criterion 2: multiplier decomposition identity ----

Outcome check_decomposition() {
  mnce::Rng rng(31);
  double max_err = 0.0;
  for (const auto& [m1, m2] : std::vector<std::pair<double, double>>{
           {0.1, 0.4}, {0.5, 0.7}, {0.2, 0.0}}) {
    mnce::MarginParams with;
    with.m1 = m1;
    with.m2 = m2;
    for (int rep = 0; rep < 10; ++rep) {
      const mnce::BatchAngles batch = mnce::random_batch(6, rng);
      const Eigen::MatrixXd q_tilde =
          mnce::probabilities(mnce::logits(batch, with.without_margins()));
      const Eigen::MatrixXd plain =
          mnce::grad_theta(batch, with.without_margins()).grad;
      const Eigen::MatrixXd margin = mnce::grad_theta(batch, with).grad;
      for (int i = 0; i < 6; ++i) {
        const int l = batch.positive_col(i);
        const mnce::MultiplierDecomposition d = mnce::multiplier_decomposition(
            batch.angles(i, l), q_tilde(i, l), with);
        for (int j = 0; j < 6; ++j) {
          if (!batch.included(i, j)) continue;
          const double sin_term = (j == l) ? d.sin_term : 1.0;
          max_err = std::max(
              max_err,
              std::fabs(margin(i, j) - plain(i, j) * d.prob_term * sin_term));
        }
      }
    }
  }
  return {max_err < 1e-10, "3 margin pairs, max_abs=" + fmt(max_err)};
}

// ---- criterion 3: subtractive closed form ----

Outcome check_closed_form() {
  mnce::Rng rng(37);
  double max_err = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const mnce::BatchAngles batch = mnce::random_batch(8, rng);
    for (double m2 : {0.0, 0.4, 0.7, 5.0}) {
      mnce::MarginParams params;
      params.m2 = m2;
      const Eigen::MatrixXd direct = mnce::grad_theta(batch, params).grad;
      const Eigen::MatrixXd closed =
          mnce::subtractive_closed_form_grad(batch, params).grad;
      max_err = std::max(max_err, (direct - closed).cwiseAbs().maxCoeff());
    }
  }
  return {max_err < 1e-10, "50 batches x 4 m2 values, max_abs=" + fmt(max_err)};
}

// ---- criterion 4: large-m2 limit ----

Outcome check_m2_limit() {
  mnce::Rng rng(41);
  double max_err = 0.0;
  for (double m1 : {0.0, 0.2}) {
    mnce::MarginParams params;
    params.m1 = m1;
    params.m2 = 50.0;
    for (int rep = 0; rep < 20; ++rep) {
      const mnce::BatchAngles batch = mnce::random_batch(8, rng);
      const Eigen::MatrixXd g = mnce::grad_theta(batch, params).grad;
      for (int i = 0; i < 8; ++i) {
        const int l = batch.positive_col(i);
        const double limit = std::sin(batch.angles(i, l) + m1) / params.tau;
        max_err = std::max(max_err, std::fabs(g(i, l) - limit));
      }
    }
  }
  return {max_err < 1e-8, "m2=50, max_abs=" + fmt(max_err)};
}

// ---- criterion 5: attenuation I reproduces the subtractive margin ----

Outcome check_attenuation_equivalence() {
  mnce::Rng rng(43);
  double max_err = 0.0;
  for (double m2 : {0.4, 0.7, 5.0}) {
    mnce::MarginParams subtractive;
    subtractive.m2 = m2;
    const mnce::MarginParams base;  // margin-free
    mnce::SchemeConfig scheme;
    scheme.scheme = mnce::Scheme::attenuation_I;
    scheme.alpha = mnce::alpha_from_m2(m2, base.tau);
    for (int rep = 0; rep < 10; ++rep) {
      const mnce::BatchAngles batch = mnce::random_batch(8, rng);
      const Eigen::MatrixXd direct =
          mnce::grad_theta(batch, subtractive).grad;
      const Eigen::MatrixXd scheme_grad =
          mnce::modified_grad(batch, base, scheme).grad;
      max_err = std::max(max_err, (direct - scheme_grad).cwiseAbs().maxCoeff());
    }
  }
  return {max_err < 1e-10, "alpha=1-exp(-m2/tau), max_abs=" + fmt(max_err)};
}

// ---- criterion 6: schemes leave the forward loss unchanged ----

Outcome check_forward_invariance() {
  mnce::Rng rng(47);
  mnce::MarginParams params;
  params.m1 = 0.1;
  params.m2 = 0.4;

  std::vector<mnce::SchemeConfig> schemes;
  {
    mnce::SchemeConfig cfg;
    schemes.push_back(cfg);  // none
    cfg.scheme = mnce::Scheme::pos_emphasis;
    cfg.s = 20.0;
    schemes.push_back(cfg);
    cfg.scheme = mnce::Scheme::curvature;
    cfg.c = 1.5;
    schemes.push_back(cfg);
    cfg = mnce::SchemeConfig{};
    cfg.scheme = mnce::Scheme::attenuation_I;
    cfg.alpha = 0.5;
    schemes.push_back(cfg);
    cfg.scheme = mnce::Scheme::attenuation_II;
    schemes.push_back(cfg);
  }

  double max_err = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    const mnce::BatchAngles batch = mnce::random_batch(6, rng);
    const Eigen::MatrixXd delta = mnce::logits(batch, params);
    const Eigen::VectorXd reference = mnce::loss(batch, params);
    for (const mnce::SchemeConfig& scheme : schemes) {
      const Eigen::MatrixXd w = mnce::scheme_weights(batch, params, scheme);
      const Eigen::VectorXd scaled = mnce::loss_from_logits(
          batch, mnce::scaled_logits(delta, delta, w), params.beta);
      max_err = std::max(max_err, (reference - scaled).cwiseAbs().maxCoeff());
    }
  }
  return {max_err <= 1e-15, "5 schemes, max_abs=" + fmt(max_err)};
}

// ---- criterion 7: reduction chains are bitwise exact ----

Outcome check_reduction_chains() {
  mnce::Rng rng(53);
  mnce::MarginParams params;
  params.m1 = 0.1;
  params.m2 = 0.4;
  bool all_equal = true;
  for (int rep = 0; rep < 5; ++rep) {
    const mnce::BatchAngles batch = mnce::random_batch(6, rng);
    const mnce::SchemeConfig none;
    const Eigen::MatrixXd base = mnce::modified_grad(batch, params, none).grad;

    mnce::SchemeConfig pos1;
    pos1.scheme = mnce::Scheme::pos_emphasis;
    pos1.s = 1.0;
    all_equal =
        all_equal && mnce::modified_grad(batch, params, pos1).grad == base;

    mnce::SchemeConfig pos7 = pos1;
    pos7.s = 7.0;
    mnce::SchemeConfig curv_inf = pos7;
    curv_inf.scheme = mnce::Scheme::curvature;  // c stays +infinity
    all_equal = all_equal &&
                mnce::modified_grad(batch, params, curv_inf).grad ==
                    mnce::modified_grad(batch, params, pos7).grad;

    for (mnce::Scheme kind :
         {mnce::Scheme::attenuation_I, mnce::Scheme::attenuation_II}) {
      mnce::SchemeConfig att;
      att.scheme = kind;
      att.alpha = 0.0;
      all_equal =
          all_equal && mnce::modified_grad(batch, params, att).grad == base;
    }
  }
  return {all_equal, all_equal ? "curvature(inf)=pos_emphasis, s=1 and "
                                 "alpha=0 collapse to none"
                               : "a reduction chain differs bitwise"};
}

// ---- criterion 8: Monte-Carlo feasibility ----

Outcome check_feasibility() {
  const auto start = Clock::now();
  const auto [lo, hi] = mnce::feasible_qtilde_range(M_PI / 2.0, 256, 0.25);
  const auto [emp_lo, emp_hi] =
      mnce::mc_feasibility_check(M_PI / 2.0, 256, 0.25, 100000, 42);
  const double elapsed = seconds_since(start);
  const bool bounds_ok = std::fabs(lo - 7.18e-5) < 1e-6 &&
                         std::fabs(hi - 0.17635) < 1e-4;
  const bool inside = emp_lo > lo && emp_hi < hi;
  return {bounds_ok && inside && elapsed < 30.0,
          "1e5 trials in (" + fmt(emp_lo) + ", " + fmt(emp_hi) +
              ") within (" + fmt(lo) + ", " + fmt(hi) + "), " + fmt(elapsed) +
              "s"};
}

// ---- criterion 9: sign reversal past pi - m1 ----

Outcome check_sign_reversal() {
  mnce::Rng rng(59);
  mnce::MarginParams with;
  with.m1 = 0.2;
  mnce::BatchAngles batch = mnce::random_batch(4, rng);
  const int l = batch.positive_col(0);
  batch.angles(0, l) = M_PI - 0.1;
  const double wide = mnce::grad_theta(batch, with).grad(0, l);
  const double base =
      mnce::grad_theta(batch, with.without_margins()).grad(0, l);
  return {wide * base < 0.0, "m1=0.2 at theta+=pi-0.1: " + fmt(base) +
                                 " flips to " + fmt(wide)};
}

// ---- criterion 10: simulator trend ----

Outcome check_simulator_trend() {
  double max_run_seconds = 0.0;
  const auto final_acc = [&](double s, double m1, double m2,
                             std::uint64_t seed) {
    mnce::TrainConfig cfg;  // default synthetic task, 2000 steps
    cfg.scheme.scheme = mnce::Scheme::pos_emphasis;
    cfg.scheme.s = s;
    cfg.margin_params.m1 = m1;
    cfg.margin_params.m2 = m2;
    cfg.seed = seed;
    const auto start = Clock::now();
    const mnce::RunMetrics metrics = mnce::run(cfg);
    max_run_seconds = std::max(max_run_seconds, seconds_since(start));
    return metrics.steps.back().accuracy;
  };
  const auto median5 = [&](double s, double m1, double m2) {
    std::vector<double> accs;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      accs.push_back(final_acc(s, m1, m2, seed));
    }
    std::sort(accs.begin(), accs.end());
    return accs[2];
  };

  double acc_s20 = final_acc(20.0, 0.0, 0.0, 0);
  double acc_s1 = final_acc(1.0, 0.0, 0.0, 0);
  bool emphasis_ok = acc_s20 > acc_s1;
  if (!emphasis_ok) {
    acc_s20 = median5(20.0, 0.0, 0.0);
    acc_s1 = median5(1.0, 0.0, 0.0);
    emphasis_ok = acc_s20 > acc_s1;
  }

  double acc_margins = final_acc(1.0, 0.1, 0.4, 0);
  double acc_plain = acc_s1;
  bool margins_ok = acc_margins >= acc_plain;
  if (!margins_ok) {
    acc_margins = median5(1.0, 0.1, 0.4);
    acc_plain = median5(1.0, 0.0, 0.0);
    margins_ok = acc_margins >= acc_plain;
  }

  return {emphasis_ok && margins_ok && max_run_seconds < 60.0,
          "s=20: " + fmt(acc_s20) + " > s=1: " + fmt(acc_s1) +
              "; margins-on: " + fmt(acc_margins) +
              " >= off: " + fmt(acc_plain) + "; max " +
              fmt(max_run_seconds) + "s/run"};
}

// ---- criterion 11: CLI determinism ----

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

Outcome check_cli_determinism(const std::string& cli) {
  if (cli.empty()) {
    return {false, "no CLI path given on the command line"};
  }
  const std::string q = "\"" + cli + "\"";
  const std::vector<std::string> commands = {
      q + " verify --seed 0 --csv acc_verify_1.csv > acc_verify_1.txt",
      q + " verify --seed 0 --csv acc_verify_2.csv > acc_verify_2.txt",
      q + " train --steps 50 --seed 1 --out acc_train_1.csv",
      q + " train --steps 50 --seed 1 --out acc_train_2.csv",
  };
  for (const std::string& cmd : commands) {
    if (std::system(cmd.c_str()) != 0) {
      return {false, "command failed: " + cmd};
    }
  }
  const bool verify_stdout_same =
      read_file("acc_verify_1.txt") == read_file("acc_verify_2.txt");
  const bool verify_csv_same =
      read_file("acc_verify_1.csv") == read_file("acc_verify_2.csv");
  const std::string train_1 = read_file("acc_train_1.csv");
  const bool train_same = !train_1.empty() && train_1 == read_file("acc_train_2.csv");
  for (const char* path :
       {"acc_verify_1.txt", "acc_verify_2.txt", "acc_verify_1.csv",
        "acc_verify_2.csv", "acc_train_1.csv", "acc_train_2.csv"}) {
    std::remove(path);
  }
  return {verify_stdout_same && verify_csv_same && train_same,
          "verify and train outputs byte-identical across reruns"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";

  struct Criterion {
    const char* name;
    Outcome outcome;
  };
  const std::vector<Criterion> criteria = {
      {"gradient-fd-agreement", check_gradient_fd()},
      {"multiplier-decomposition", check_decomposition()},
      {"subtractive-closed-form", check_closed_form()},
      {"m2-limit", check_m2_limit()},
      {"attenuation-I-equivalence", check_attenuation_equivalence()},
      {"forward-invariance", check_forward_invariance()},
      {"reduction-chains", check_reduction_chains()},
      {"feasibility-bounds", check_feasibility()},
      {"sign-reversal", check_sign_reversal()},
      {"simulator-trend", check_simulator_trend()},
      {"cli-determinism", check_cli_determinism(cli)},
  };

  bool all_ok = true;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const Criterion& c = criteria[i];
    std::printf("criterion %2zu %-28s %s  (%s)\n", i + 1, c.name,
                c.outcome.ok ? "PASS" : "FAIL", c.outcome.detail.c_str());
    all_ok = all_ok && c.outcome.ok;
  }
  std::printf("acceptance: %s\n", all_ok ? "all criteria passed" : "FAILED");
  return all_ok ? 0 : 1;
}
