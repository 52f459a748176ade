// Command-line front end for the margin InfoNCE analysis library.
// Talks to the core exclusively through the C API in mnce.h.

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "mnce.h"

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string fmt9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

[[noreturn]] void fail(const std::string& message, int code) {
  std::cerr << "error: " << message << "\n";
  std::exit(code);
}

void check(mnce_status status) {
  if (status != MNCE_OK) {
    fail(std::string(mnce_strerror(status)) + ": " +
             mnce_last_error_message(),
         2);
  }
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot open output file " + path, 2);
  out << content;
  if (!out) fail("failed writing " + path, 2);
}

struct GradmapOpts {
  double beta = 1.0;
  double tau = 0.25;
  int batch_size = 256;
  double m1 = 0.0;
  double m2 = 0.0;
  int grid = 101;
  std::string out = "gradmap.csv";
};

int run_gradmap(const GradmapOpts& o) {
  mnce_margin_params params;
  mnce_default_params(&params);
  params.beta = o.beta;
  params.tau = o.tau;
  params.m1 = o.m1;
  params.m2 = o.m2;
  std::ostringstream csv;
  csv << "# command=gradmap beta=" << fmt9(o.beta) << " tau=" << fmt9(o.tau)
      << " batch_size=" << o.batch_size << " m1=" << fmt9(o.m1)
      << " m2=" << fmt9(o.m2) << " grid=" << o.grid << "\n";
  csv << "theta,q,p,grad_abs\n";
  for (double p : {0.0, 1.0}) {
    for (int ti = 0; ti < o.grid; ++ti) {
      const double theta = kPi * ti / (o.grid - 1);
      for (int qi = 0; qi < o.grid; ++qi) {
        const double q = static_cast<double>(qi) / (o.grid - 1);
        double grad = 0.0;
        check(mnce_grad_at(theta, q, p, &params, &grad));
        csv << fmt9(theta) << ',' << fmt9(q) << ',' << fmt9(p) << ','
            << fmt9(std::fabs(grad)) << "\n";
      }
    }
  }
  write_file(o.out, csv.str());
  return 0;
}

struct MultmapOpts {
  double m1 = 0.2;
  double m2 = 0.0;
  double tau = 0.25;
  int batch_size = 256;
  int grid = 101;
  std::string out = "multmap.csv";
};

int run_multmap(const MultmapOpts& o) {
  mnce_margin_params params;
  mnce_default_params(&params);
  params.m1 = o.m1;
  params.m2 = o.m2;
  params.tau = o.tau;
  std::ostringstream csv;
  csv << "# command=multmap m1=" << fmt9(o.m1) << " m2=" << fmt9(o.m2)
      << " tau=" << fmt9(o.tau) << " batch_size=" << o.batch_size
      << " grid=" << o.grid << "\n";
  csv << "theta_pos,q_tilde_pos,prob_term,sin_term,feasible\n";
  // theta spans [0, pi] inclusive; q~ spans the open interval (0, 1) so
  // the probability term stays defined at every lattice point.
  for (int ti = 0; ti < o.grid; ++ti) {
    const double theta = kPi * ti / (o.grid - 1);
    double lo = 0.0, hi = 1.0;
    check(mnce_feasible_qtilde_range(theta, o.batch_size, o.tau, &lo, &hi));
    for (int qi = 0; qi < o.grid; ++qi) {
      const double q = static_cast<double>(qi + 1) / (o.grid + 1);
      double prob = 0.0, sine = 0.0;
      const mnce_status st =
          mnce_multiplier_terms(theta, q, &params, &prob, &sine);
      if (st != MNCE_OK && st != MNCE_ERR_NEAR_SINGULAR) check(st);
      const int feasible = (q > lo && q < hi) ? 1 : 0;
      csv << fmt9(theta) << ',' << fmt9(q) << ',' << fmt9(prob) << ','
          << fmt9(sine) << ',' << feasible << "\n";
    }
  }
  write_file(o.out, csv.str());
  return 0;
}

struct CurveOpts {
  std::vector<std::string> c_list = {"1/3", "0.5", "0.7", "1",
                                     "1.5", "2.5", "5"};
  int points = 101;
  std::string out = "curve.csv";
};

double parse_curvature(const std::string& token) {
  if (token == "inf" || token == "infinity") {
    return INFINITY;
  }
  const auto slash = token.find('/');
  try {
    if (slash != std::string::npos) {
      return std::stod(token.substr(0, slash)) /
             std::stod(token.substr(slash + 1));
    }
    return std::stod(token);
  } catch (const std::exception&) {
    fail("cannot parse curvature value '" + token + "'", 2);
  }
}

int run_curve(const CurveOpts& o) {
  std::ostringstream csv;
  csv << "# command=curve points=" << o.points << " c_list=";
  for (size_t i = 0; i < o.c_list.size(); ++i) {
    if (i) csv << ';';
    csv << o.c_list[i];
  }
  csv << "\n";
  csv << "x,c,gamma\n";
  for (const std::string& token : o.c_list) {
    const double c = parse_curvature(token);
    for (int i = 0; i < o.points; ++i) {
      const double x = static_cast<double>(i) / (o.points - 1);
      double g = 0.0;
      check(mnce_gamma(x, c, &g));
      csv << fmt9(x) << ',' << fmt9(c) << ',' << fmt9(g) << "\n";
    }
  }
  write_file(o.out, csv.str());
  return 0;
}

int run_verify(unsigned long long seed, const std::string& csv_path) {
  mnce_check_suite* suite = nullptr;
  check(mnce_check_suite_run(seed, &suite));
  const int n = mnce_check_suite_size(suite);
  bool all_passed = true;
  std::ostringstream csv;
  csv << "name,max_abs_err,max_rel_err,cases,passed\n";
  std::printf("%-26s %12s %12s %8s %10s %6s\n", "check", "max_abs_err",
              "max_rel_err", "cases", "tolerance", "pass");
  for (int i = 0; i < n; ++i) {
    mnce_check_report r;
    check(mnce_check_suite_report(suite, i, &r));
    std::printf("%-26s %12.3e %12.3e %8ld %10.1e %6s\n", r.name,
                r.max_abs_err, r.max_rel_err, r.cases, r.tolerance,
                r.passed ? "ok" : "FAIL");
    csv << r.name << ',' << fmt9(r.max_abs_err) << ',' << fmt9(r.max_rel_err)
        << ',' << r.cases << ',' << r.passed << "\n";
    all_passed = all_passed && r.passed;
  }
  mnce_check_suite_destroy(suite);
  if (!csv_path.empty()) write_file(csv_path, csv.str());
  std::printf("result: %s\n", all_passed ? "all checks passed" : "FAILED");
  return all_passed ? 0 : 1;
}

struct TrainOpts {
  std::string mode = "moco_like";
  std::string scheme = "none";
  double s = 1.0;
  std::string c = "inf";
  double alpha = 0.0;
  double m1 = 0.0;
  double m2 = 0.0;
  double beta = 1.0;
  double tau = 0.25;
  long steps = 2000;
  unsigned long long seed = 0;
  double lr = 0.05;
  double ema = 0.99;
  int batch = 64;
  int classes = 4;
  int samples = 512;
  int input_dim = 32;
  int embed_dim = 16;
  double sigma_class = 0.1;
  double sigma_view = 0.05;
  std::string out = "train.csv";
  std::vector<std::string> sweep;
  int jobs = 0;
};

int parse_mode(const std::string& name) {
  if (name == "moco_like") return MNCE_MODE_MOCO_LIKE;
  if (name == "simclr_like") return MNCE_MODE_SIMCLR_LIKE;
  if (name == "byol_like") return MNCE_MODE_BYOL_LIKE;
  fail("unknown mode '" + name + "'", 2);
}

int parse_scheme(const std::string& name) {
  if (name == "none") return MNCE_SCHEME_NONE;
  if (name == "pos_emphasis") return MNCE_SCHEME_POS_EMPHASIS;
  if (name == "curvature") return MNCE_SCHEME_CURVATURE;
  if (name == "attenuation_I") return MNCE_SCHEME_ATTENUATION_I;
  if (name == "attenuation_II") return MNCE_SCHEME_ATTENUATION_II;
  fail("unknown scheme '" + name + "'", 2);
}

mnce_train_config config_from_opts(const TrainOpts& o) {
  mnce_train_config cfg;
  mnce_train_default_config(&cfg);
  cfg.mode = parse_mode(o.mode);
  cfg.scheme.scheme = parse_scheme(o.scheme);
  cfg.scheme.s = o.s;
  cfg.scheme.c = parse_curvature(o.c);
  cfg.scheme.alpha = o.alpha;
  cfg.params.m1 = o.m1;
  cfg.params.m2 = o.m2;
  cfg.params.beta = o.beta;
  cfg.params.tau = o.tau;
  cfg.lr = o.lr;
  cfg.ema_momentum = o.ema;
  cfg.batch = o.batch;
  cfg.steps = o.steps;
  cfg.n_classes = o.classes;
  cfg.n_samples = o.samples;
  cfg.input_dim = o.input_dim;
  cfg.embed_dim = o.embed_dim;
  cfg.sigma_class = o.sigma_class;
  cfg.sigma_view = o.sigma_view;
  cfg.seed = o.seed;
  return cfg;
}

std::string provenance_line(const TrainOpts& o, double s, const std::string& c) {
  std::ostringstream line;
  line << "# command=train mode=" << o.mode << " scheme=" << o.scheme
       << " s=" << fmt9(s) << " c=" << c << " alpha=" << fmt9(o.alpha)
       << " m1=" << fmt9(o.m1) << " m2=" << fmt9(o.m2)
       << " beta=" << fmt9(o.beta) << " tau=" << fmt9(o.tau)
       << " lr=" << fmt9(o.lr) << " ema=" << fmt9(o.ema)
       << " batch=" << o.batch << " steps=" << o.steps
       << " classes=" << o.classes << " samples=" << o.samples
       << " input_dim=" << o.input_dim << " embed_dim=" << o.embed_dim
       << " sigma_class=" << fmt9(o.sigma_class)
       << " sigma_view=" << fmt9(o.sigma_view) << " seed=" << o.seed << "\n";
  return line.str();
}

void run_one_training(const TrainOpts& opts, double s, const std::string& c,
                      const std::string& out_path) {
  TrainOpts local = opts;
  local.s = s;
  local.c = c;
  const mnce_train_config cfg = config_from_opts(local);
  mnce_run_metrics* metrics = nullptr;
  const mnce_status st = mnce_train_run(&cfg, &metrics);
  if (st != MNCE_OK) {
    fail(std::string(mnce_strerror(st)) + ": " + mnce_last_error_message(),
         2);
  }
  std::ostringstream csv;
  csv << provenance_line(local, s, c);
  csv << "step,loss,align,spread,acc,collapsed\n";
  const long n = mnce_run_metrics_steps(metrics);
  for (long i = 0; i < n; ++i) {
    double row[5];
    check(mnce_run_metrics_row(metrics, i, row));
    csv << i << ',' << fmt9(row[0]) << ',' << fmt9(row[1]) << ','
        << fmt9(row[2]) << ',' << fmt9(row[3]) << ','
        << static_cast<int>(row[4]) << "\n";
  }
  mnce_run_metrics_destroy(metrics);
  write_file(out_path, csv.str());
}

// Accepts "s=1,5,20" / "c=0.7,1,2.5" sweep specs.
void parse_sweep_spec(const std::vector<std::string>& specs,
                      std::vector<std::string>& s_values,
                      std::vector<std::string>& c_values) {
  for (const std::string& spec : specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) {
      fail("sweep spec must look like s=1,5,20 or c=0.7,1,2.5", 2);
    }
    const std::string key = spec.substr(0, eq);
    std::vector<std::string>* target = nullptr;
    if (key == "s") target = &s_values;
    else if (key == "c") target = &c_values;
    else fail("sweep key must be 's' or 'c'", 2);
    target->clear();
    std::stringstream rest(spec.substr(eq + 1));
    std::string token;
    while (std::getline(rest, token, ',')) {
      if (!token.empty()) target->push_back(token);
    }
    if (target->empty()) fail("empty sweep list in '" + spec + "'", 2);
  }
}

std::string sweep_filename(const std::string& base, const std::string& s,
                           const std::string& c) {
  const auto dot = base.rfind('.');
  const std::string stem = dot == std::string::npos ? base : base.substr(0, dot);
  const std::string ext = dot == std::string::npos ? ".csv" : base.substr(dot);
  return stem + "_s" + s + "_c" + c + ext;
}

int run_train(const TrainOpts& o) {
  if (o.sweep.empty()) {
    run_one_training(o, o.s, o.c, o.out);
    return 0;
  }
  std::vector<std::string> s_values = {fmt9(o.s)};
  std::vector<std::string> c_values = {o.c};
  parse_sweep_spec(o.sweep, s_values, c_values);

  struct Job {
    double s;
    std::string c;
    std::string path;
  };
  std::vector<Job> jobs;
  for (const std::string& sv : s_values) {
    for (const std::string& cv : c_values) {
      double s = 0.0;
      try {
        s = std::stod(sv);
      } catch (const std::exception&) {
        fail("cannot parse sweep value '" + sv + "'", 2);
      }
      jobs.push_back({s, cv, sweep_filename(o.out, sv, cv)});
    }
  }
  unsigned workers = o.jobs > 0 ? static_cast<unsigned>(o.jobs)
                                : std::thread::hardware_concurrency();
  if (workers == 0) workers = 1;
  workers = std::min<unsigned>(workers, jobs.size());
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (size_t i = next.fetch_add(1); i < jobs.size();
           i = next.fetch_add(1)) {
        run_one_training(o, jobs[i].s, jobs[i].c, jobs[i].path);
      }
    });
  }
  for (std::thread& t : pool) t.join();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Margin InfoNCE gradient analysis and training simulator"};
  app.require_subcommand(1);
  app.set_config("--config", "", "flat key=value config file; command-line "
                                 "flags take precedence");

  GradmapOpts gradmap;
  auto* cmd_gradmap = app.add_subcommand(
      "gradmap", "Emit |dL/dtheta| over a (theta, q) lattice for p in {0,1}");
  cmd_gradmap->add_option("--beta", gradmap.beta);
  cmd_gradmap->add_option("--tau", gradmap.tau);
  cmd_gradmap->add_option("--batch-size", gradmap.batch_size);
  cmd_gradmap->add_option("--m1", gradmap.m1);
  cmd_gradmap->add_option("--m2", gradmap.m2);
  cmd_gradmap->add_option("--grid", gradmap.grid)->check(CLI::Range(2, 100000));
  cmd_gradmap->add_option("--out", gradmap.out);

  MultmapOpts multmap;
  auto* cmd_multmap = app.add_subcommand(
      "multmap",
      "Emit angular-margin multiplier terms over a (theta+, q~+) lattice");
  cmd_multmap->add_option("--m1", multmap.m1);
  cmd_multmap->add_option("--m2", multmap.m2);
  cmd_multmap->add_option("--tau", multmap.tau);
  cmd_multmap->add_option("--batch-size", multmap.batch_size);
  cmd_multmap->add_option("--grid", multmap.grid)->check(CLI::Range(2, 100000));
  cmd_multmap->add_option("--out", multmap.out);

  CurveOpts curve;
  auto* cmd_curve =
      app.add_subcommand("curve", "Emit gamma(x, c) samples for a c sweep");
  cmd_curve->add_option("--c-list", curve.c_list)->delimiter(',');
  cmd_curve->add_option("--points", curve.points)->check(CLI::Range(2, 1000000));
  cmd_curve->add_option("--out", curve.out);

  unsigned long long verify_seed = 0;
  std::string verify_csv;
  auto* cmd_verify =
      app.add_subcommand("verify", "Run the oracle check suite");
  cmd_verify->add_option("--seed", verify_seed);
  cmd_verify->add_option("--csv", verify_csv, "also write reports as CSV");

  TrainOpts train;
  auto* cmd_train = app.add_subcommand(
      "train", "Run the hypersphere training simulator, write metrics CSV");
  cmd_train->add_option("--mode", train.mode,
                        "moco_like | simclr_like | byol_like");
  cmd_train->add_option(
      "--scheme", train.scheme,
      "none | pos_emphasis | curvature | attenuation_I | attenuation_II");
  cmd_train->add_option("--s", train.s);
  cmd_train->add_option("--c", train.c);
  cmd_train->add_option("--alpha", train.alpha);
  cmd_train->add_option("--m1", train.m1);
  cmd_train->add_option("--m2", train.m2);
  cmd_train->add_option("--beta", train.beta);
  cmd_train->add_option("--tau", train.tau);
  cmd_train->add_option("--steps", train.steps);
  cmd_train->add_option("--seed", train.seed);
  cmd_train->add_option("--lr", train.lr);
  cmd_train->add_option("--ema", train.ema);
  cmd_train->add_option("--batch-size", train.batch);
  cmd_train->add_option("--classes", train.classes);
  cmd_train->add_option("--samples", train.samples);
  cmd_train->add_option("--input-dim", train.input_dim);
  cmd_train->add_option("--embed-dim", train.embed_dim);
  cmd_train->add_option("--sigma-class", train.sigma_class);
  cmd_train->add_option("--sigma-view", train.sigma_view);
  cmd_train->add_option("--out", train.out);
  cmd_train->add_option("--sweep", train.sweep,
                        "comma lists, e.g. --sweep s=1,5,20 c=0.7,1,2.5");
  cmd_train->add_option("--jobs", train.jobs,
                        "sweep worker pool size (default: cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  if (cmd_gradmap->parsed()) return run_gradmap(gradmap);
  if (cmd_multmap->parsed()) return run_multmap(multmap);
  if (cmd_curve->parsed()) return run_curve(curve);
  if (cmd_verify->parsed()) return run_verify(verify_seed, verify_csv);
  if (cmd_train->parsed()) return run_train(train);
  return 2;
}
