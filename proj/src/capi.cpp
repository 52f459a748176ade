#include "mnce.h"

#include <cmath>
#include <cstring>
#include <string>

#include "mnce/grad_analysis.hpp"
#include "mnce/grad_mods.hpp"
#include "mnce/loss.hpp"
#include "mnce/simulator.hpp"
#include "mnce/verification.hpp"

namespace {

thread_local std::string g_last_error;

mnce_status to_status(const mnce::Error& e) {
  switch (e.code()) {
    case mnce::ErrorCode::invalid_argument:
      return MNCE_ERR_INVALID_ARGUMENT;
    case mnce::ErrorCode::zero_vector:
      return MNCE_ERR_ZERO_VECTOR;
    case mnce::ErrorCode::dimension_mismatch:
      return MNCE_ERR_DIMENSION_MISMATCH;
    case mnce::ErrorCode::near_singular:
      return MNCE_ERR_NEAR_SINGULAR;
    case mnce::ErrorCode::beta_not_one:
      return MNCE_ERR_BETA_NOT_ONE;
    case mnce::ErrorCode::degenerate_weight:
      return MNCE_ERR_DEGENERATE_WEIGHT;
  }
  return MNCE_ERR_INTERNAL;
}

template <typename Fn>
mnce_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return MNCE_OK;
  } catch (const mnce::Error& e) {
    g_last_error = e.what();
    return to_status(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MNCE_ERR_INTERNAL;
  }
}

mnce::MarginParams to_params(const mnce_margin_params* p) {
  if (p == nullptr) {
    throw mnce::Error(mnce::ErrorCode::invalid_argument,
                      "params must not be null");
  }
  mnce::MarginParams out;
  out.m1 = p->m1;
  out.m2 = p->m2;
  out.tau = p->tau;
  out.beta = p->beta;
  out.validate();
  return out;
}

mnce::SchemeConfig to_scheme(const mnce_scheme_config* s) {
  if (s == nullptr) {
    throw mnce::Error(mnce::ErrorCode::invalid_argument,
                      "scheme must not be null");
  }
  mnce::SchemeConfig out;
  switch (s->scheme) {
    case MNCE_SCHEME_NONE:
      out.scheme = mnce::Scheme::none;
      break;
    case MNCE_SCHEME_POS_EMPHASIS:
      out.scheme = mnce::Scheme::pos_emphasis;
      break;
    case MNCE_SCHEME_CURVATURE:
      out.scheme = mnce::Scheme::curvature;
      break;
    case MNCE_SCHEME_ATTENUATION_I:
      out.scheme = mnce::Scheme::attenuation_I;
      break;
    case MNCE_SCHEME_ATTENUATION_II:
      out.scheme = mnce::Scheme::attenuation_II;
      break;
    default:
      throw mnce::Error(mnce::ErrorCode::invalid_argument,
                        "unknown scheme tag");
  }
  out.s = s->s;
  out.c = s->c;
  out.alpha = s->alpha;
  out.validate();
  return out;
}

void require(bool cond, const char* what) {
  if (!cond) {
    throw mnce::Error(mnce::ErrorCode::invalid_argument, what);
  }
}

void copy_grad(const mnce::GradientField& field, double* out) {
  const int b = static_cast<int>(field.grad.rows());
  for (int i = 0; i < b; ++i) {
    for (int j = 0; j < b; ++j) {
      out[i * b + j] = field.grad(i, j);
    }
  }
}

}  // namespace

struct mnce_batch {
  mnce::BatchAngles batch;
};

struct mnce_check_suite {
  std::vector<mnce::CheckReport> reports;
};

struct mnce_run_metrics {
  mnce::RunMetrics metrics;
};

extern "C" {

const char* mnce_strerror(mnce_status status) {
  switch (status) {
    case MNCE_OK:
      return "ok";
    case MNCE_ERR_INVALID_ARGUMENT:
      return "invalid argument";
    case MNCE_ERR_ZERO_VECTOR:
      return "zero vector";
    case MNCE_ERR_DIMENSION_MISMATCH:
      return "dimension mismatch";
    case MNCE_ERR_NEAR_SINGULAR:
      return "near singular";
    case MNCE_ERR_BETA_NOT_ONE:
      return "beta not one";
    case MNCE_ERR_DEGENERATE_WEIGHT:
      return "degenerate weight";
    case MNCE_ERR_INTERNAL:
      return "internal error";
  }
  return "unknown status";
}

const char* mnce_last_error_message(void) { return g_last_error.c_str(); }

void mnce_default_params(mnce_margin_params* out) {
  if (out == nullptr) return;
  out->m1 = 0.0;
  out->m2 = 0.0;
  out->tau = 0.25;
  out->beta = 1.0;
}

void mnce_default_scheme(mnce_scheme_config* out) {
  if (out == nullptr) return;
  out->scheme = MNCE_SCHEME_NONE;
  out->s = 1.0;
  out->c = INFINITY;
  out->alpha = 0.0;
}

mnce_status mnce_grad_at(double theta, double q, double p,
                         const mnce_margin_params* params, double* out) {
  return guarded([&] {
    require(out != nullptr, "out must not be null");
    require(theta >= 0.0 && theta <= M_PI, "theta must lie in [0, pi]");
    const mnce::MarginParams mp = to_params(params);
    *out = (p - mp.beta * q) * std::sin(theta + mp.m1 * p) / mp.tau;
  });
}

mnce_status mnce_multiplier_terms(double theta_pos, double q_tilde_pos,
                                  const mnce_margin_params* params,
                                  double* prob_term, double* sin_term) {
  return guarded([&] {
    require(prob_term != nullptr && sin_term != nullptr,
            "outputs must not be null");
    const mnce::MarginParams mp = to_params(params);
    try {
      const mnce::MultiplierDecomposition d =
          mnce::multiplier_decomposition(theta_pos, q_tilde_pos, mp);
      *prob_term = d.prob_term;
      *sin_term = d.sin_term;
    } catch (const mnce::Error& e) {
      if (e.code() != mnce::ErrorCode::near_singular) throw;
      // Probability term stays well defined at sin(theta+) = 0; report
      // the sine ratio as an out-of-band infinity and keep the error.
      const double shift =
          (std::cos(theta_pos + mp.m1) - std::cos(theta_pos) - mp.m2) / mp.tau;
      *prob_term = 1.0 / (1.0 + q_tilde_pos * std::expm1(shift));
      *sin_term = INFINITY;
      throw;
    }
  });
}

mnce_status mnce_feasible_qtilde_range(double theta_pos, int batch_size,
                                       double tau, double* low, double* high) {
  return guarded([&] {
    require(low != nullptr && high != nullptr, "outputs must not be null");
    const auto [lo, hi] =
        mnce::feasible_qtilde_range(theta_pos, batch_size, tau);
    *low = lo;
    *high = hi;
  });
}

mnce_status mnce_gamma(double x, double c, double* out) {
  return guarded([&] {
    require(out != nullptr, "out must not be null");
    *out = mnce::gamma_curve(x, c);
  });
}

mnce_status mnce_alpha_from_m2(double m2, double tau, double* out) {
  return guarded([&] {
    require(out != nullptr, "out must not be null");
    *out = mnce::alpha_from_m2(m2, tau);
  });
}

mnce_status mnce_sign_reversal_threshold(double m1, double* out) {
  return guarded([&] {
    require(out != nullptr, "out must not be null");
    *out = mnce::sign_reversal_threshold(m1);
  });
}

mnce_status mnce_m2_limit_grad(double theta_pos,
                               const mnce_margin_params* params, double* out) {
  return guarded([&] {
    require(out != nullptr, "out must not be null");
    *out = mnce::m2_limit_grad(theta_pos, to_params(params));
  });
}

mnce_status mnce_batch_create(int size, const double* angles_row_major,
                              const int* positive_cols, mnce_batch** out) {
  return guarded([&] {
    require(out != nullptr, "out must not be null");
    require(size >= 2, "batch size must be >= 2");
    require(angles_row_major != nullptr && positive_cols != nullptr,
            "angles and positive_cols must not be null");
    Eigen::MatrixXd angles(size, size);
    for (int i = 0; i < size; ++i) {
      for (int j = 0; j < size; ++j) {
        angles(i, j) = angles_row_major[i * size + j];
      }
    }
    std::vector<int> positives(positive_cols, positive_cols + size);
    auto* handle = new mnce_batch{mnce::make_batch(angles, positives)};
    *out = handle;
  });
}

void mnce_batch_destroy(mnce_batch* batch) { delete batch; }

mnce_status mnce_loss(const mnce_batch* batch,
                      const mnce_margin_params* params,
                      double* out_per_anchor) {
  return guarded([&] {
    require(batch != nullptr && out_per_anchor != nullptr,
            "batch and out must not be null");
    const Eigen::VectorXd values =
        mnce::loss(batch->batch, to_params(params));
    for (long i = 0; i < values.size(); ++i) out_per_anchor[i] = values(i);
  });
}

mnce_status mnce_grad_theta(const mnce_batch* batch,
                            const mnce_margin_params* params,
                            double* out_row_major) {
  return guarded([&] {
    require(batch != nullptr && out_row_major != nullptr,
            "batch and out must not be null");
    copy_grad(mnce::grad_theta(batch->batch, to_params(params)),
              out_row_major);
  });
}

mnce_status mnce_modified_grad(const mnce_batch* batch,
                               const mnce_margin_params* params,
                               const mnce_scheme_config* scheme,
                               double* out_row_major) {
  return guarded([&] {
    require(batch != nullptr && out_row_major != nullptr,
            "batch and out must not be null");
    copy_grad(mnce::modified_grad(batch->batch, to_params(params),
                                  to_scheme(scheme)),
              out_row_major);
  });
}

mnce_status mnce_subtractive_closed_form_grad(const mnce_batch* batch,
                                              const mnce_margin_params* params,
                                              double* out_row_major) {
  return guarded([&] {
    require(batch != nullptr && out_row_major != nullptr,
            "batch and out must not be null");
    copy_grad(
        mnce::subtractive_closed_form_grad(batch->batch, to_params(params)),
        out_row_major);
  });
}

mnce_status mnce_check_suite_run(unsigned long long seed,
                                 mnce_check_suite** out) {
  return guarded([&] {
    require(out != nullptr, "out must not be null");
    *out = new mnce_check_suite{mnce::run_all_checks(seed)};
  });
}

int mnce_check_suite_size(const mnce_check_suite* suite) {
  return suite == nullptr ? 0 : static_cast<int>(suite->reports.size());
}

mnce_status mnce_check_suite_report(const mnce_check_suite* suite, int index,
                                    mnce_check_report* out) {
  return guarded([&] {
    require(suite != nullptr && out != nullptr,
            "suite and out must not be null");
    require(index >= 0 && index < static_cast<int>(suite->reports.size()),
            "report index out of range");
    const mnce::CheckReport& r = suite->reports[index];
    std::memset(out->name, 0, sizeof(out->name));
    std::strncpy(out->name, r.name.c_str(), sizeof(out->name) - 1);
    out->max_abs_err = r.max_abs_err;
    out->max_rel_err = r.max_rel_err;
    out->tolerance = r.tolerance;
    out->cases = r.cases;
    out->passed = r.passed ? 1 : 0;
  });
}

void mnce_check_suite_destroy(mnce_check_suite* suite) { delete suite; }

mnce_status mnce_mc_feasibility(double theta_pos, int batch_size, double tau,
                                long trials, unsigned long long seed,
                                double* low, double* high) {
  return guarded([&] {
    require(low != nullptr && high != nullptr, "outputs must not be null");
    const auto [lo, hi] =
        mnce::mc_feasibility_check(theta_pos, batch_size, tau, trials, seed);
    *low = lo;
    *high = hi;
  });
}

void mnce_train_default_config(mnce_train_config* out) {
  if (out == nullptr) return;
  const mnce::TrainConfig defaults;
  out->mode = MNCE_MODE_MOCO_LIKE;
  mnce_default_params(&out->params);
  mnce_default_scheme(&out->scheme);
  out->lr = defaults.lr;
  out->ema_momentum = defaults.ema_momentum;
  out->sigma_class = defaults.sigma_class;
  out->sigma_view = defaults.sigma_view;
  out->batch = defaults.batch;
  out->steps = defaults.steps;
  out->n_classes = defaults.n_classes;
  out->n_samples = defaults.n_samples;
  out->input_dim = defaults.input_dim;
  out->embed_dim = defaults.embed_dim;
  out->seed = 0;
}

mnce_status mnce_train_run(const mnce_train_config* config,
                           mnce_run_metrics** out) {
  return guarded([&] {
    require(config != nullptr && out != nullptr,
            "config and out must not be null");
    mnce::TrainConfig cfg;
    switch (config->mode) {
      case MNCE_MODE_MOCO_LIKE:
        cfg.mode = mnce::Mode::moco_like;
        break;
      case MNCE_MODE_SIMCLR_LIKE:
        cfg.mode = mnce::Mode::simclr_like;
        break;
      case MNCE_MODE_BYOL_LIKE:
        cfg.mode = mnce::Mode::byol_like;
        break;
      default:
        throw mnce::Error(mnce::ErrorCode::invalid_argument,
                          "unknown train mode");
    }
    cfg.margin_params.m1 = config->params.m1;
    cfg.margin_params.m2 = config->params.m2;
    cfg.margin_params.tau = config->params.tau;
    cfg.margin_params.beta = config->params.beta;
    cfg.scheme = to_scheme(&config->scheme);
    cfg.lr = config->lr;
    cfg.ema_momentum = config->ema_momentum;
    cfg.sigma_class = config->sigma_class;
    cfg.sigma_view = config->sigma_view;
    cfg.batch = config->batch;
    cfg.steps = config->steps;
    cfg.n_classes = config->n_classes;
    cfg.n_samples = config->n_samples;
    cfg.input_dim = config->input_dim;
    cfg.embed_dim = config->embed_dim;
    cfg.seed = config->seed;
    *out = new mnce_run_metrics{mnce::run(cfg)};
  });
}

long mnce_run_metrics_steps(const mnce_run_metrics* metrics) {
  return metrics == nullptr ? 0
                            : static_cast<long>(metrics->metrics.steps.size());
}

mnce_status mnce_run_metrics_row(const mnce_run_metrics* metrics, long step,
                                 double out[5]) {
  return guarded([&] {
    require(metrics != nullptr && out != nullptr,
            "metrics and out must not be null");
    require(step >= 0 &&
                step < static_cast<long>(metrics->metrics.steps.size()),
            "step out of range");
    const mnce::StepMetrics& m = metrics->metrics.steps[step];
    out[0] = m.loss;
    out[1] = m.alignment;
    out[2] = m.spread;
    out[3] = m.accuracy;
    out[4] = m.collapsed ? 1.0 : 0.0;
  });
}

void mnce_run_metrics_destroy(mnce_run_metrics* metrics) { delete metrics; }

}  // extern "C"
