/*
 * C API for the margin InfoNCE analysis library.
 *
 * All functions return mnce_status; outputs are written through pointers.
 * Opaque handles are created and destroyed by the library. On error,
 * mnce_last_error_message() returns a thread-local description.
 */
#ifndef MNCE_H
#define MNCE_H

#include <stddef.h>

#if defined(_WIN32)
#define MNCE_API __declspec(dllexport)
#else
#define MNCE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum {
  MNCE_OK = 0,
  MNCE_ERR_INVALID_ARGUMENT = 1,
  MNCE_ERR_ZERO_VECTOR = 2,
  MNCE_ERR_DIMENSION_MISMATCH = 3,
  MNCE_ERR_NEAR_SINGULAR = 4,
  MNCE_ERR_BETA_NOT_ONE = 5,
  MNCE_ERR_DEGENERATE_WEIGHT = 6,
  MNCE_ERR_INTERNAL = 7
} mnce_status;

MNCE_API const char* mnce_strerror(mnce_status status);
MNCE_API const char* mnce_last_error_message(void);

/* Loss hyperparameters: angular margin m1 (radians), subtractive margin
 * m2, temperature tau, partition-term weight beta in [0, 1]. */
typedef struct {
  double m1;
  double m2;
  double tau;
  double beta;
} mnce_margin_params;

typedef enum {
  MNCE_SCHEME_NONE = 0,
  MNCE_SCHEME_POS_EMPHASIS = 1,
  MNCE_SCHEME_CURVATURE = 2,
  MNCE_SCHEME_ATTENUATION_I = 3,
  MNCE_SCHEME_ATTENUATION_II = 4
} mnce_scheme_kind;

/* c may be +infinity (curvature then reduces to pos_emphasis). */
typedef struct {
  int scheme; /* mnce_scheme_kind */
  double s;
  double c;
  double alpha;
} mnce_scheme_config;

MNCE_API void mnce_default_params(mnce_margin_params* out);
MNCE_API void mnce_default_scheme(mnce_scheme_config* out);

/* ---- scalar analysis ---- */

/* (p - beta q) sin(theta + m1 p) / tau */
MNCE_API mnce_status mnce_grad_at(double theta, double q, double p,
                                  const mnce_margin_params* params,
                                  double* out);

/* Margin multiplier terms at (theta+, q~+): the shared probability term
 * and the positive sine ratio. Fails with MNCE_ERR_NEAR_SINGULAR when
 * sin(theta+) < 1e-6; in that case prob_term is still valid and sin_term
 * is set to +infinity. */
MNCE_API mnce_status mnce_multiplier_terms(double theta_pos,
                                           double q_tilde_pos,
                                           const mnce_margin_params* params,
                                           double* prob_term,
                                           double* sin_term);

MNCE_API mnce_status mnce_feasible_qtilde_range(double theta_pos,
                                                int batch_size, double tau,
                                                double* low, double* high);

MNCE_API mnce_status mnce_gamma(double x, double c, double* out);
MNCE_API mnce_status mnce_alpha_from_m2(double m2, double tau, double* out);
MNCE_API mnce_status mnce_sign_reversal_threshold(double m1, double* out);
MNCE_API mnce_status mnce_m2_limit_grad(double theta_pos,
                                        const mnce_margin_params* params,
                                        double* out);

/* ---- batch evaluation ---- */

typedef struct mnce_batch mnce_batch;

/* angles: size*size row-major radians in [0, pi];
 * positive_cols: the one positive column per anchor row. */
MNCE_API mnce_status mnce_batch_create(int size,
                                       const double* angles_row_major,
                                       const int* positive_cols,
                                       mnce_batch** out);
MNCE_API void mnce_batch_destroy(mnce_batch* batch);

MNCE_API mnce_status mnce_loss(const mnce_batch* batch,
                               const mnce_margin_params* params,
                               double* out_per_anchor);
MNCE_API mnce_status mnce_grad_theta(const mnce_batch* batch,
                                     const mnce_margin_params* params,
                                     double* out_row_major);
MNCE_API mnce_status mnce_modified_grad(const mnce_batch* batch,
                                        const mnce_margin_params* params,
                                        const mnce_scheme_config* scheme,
                                        double* out_row_major);
MNCE_API mnce_status mnce_subtractive_closed_form_grad(
    const mnce_batch* batch, const mnce_margin_params* params,
    double* out_row_major);

/* ---- verification ---- */

typedef struct mnce_check_suite mnce_check_suite;

typedef struct {
  char name[64];
  double max_abs_err;
  double max_rel_err;
  double tolerance;
  long cases;
  int passed;
} mnce_check_report;

MNCE_API mnce_status mnce_check_suite_run(unsigned long long seed,
                                          mnce_check_suite** out);
MNCE_API int mnce_check_suite_size(const mnce_check_suite* suite);
MNCE_API mnce_status mnce_check_suite_report(const mnce_check_suite* suite,
                                             int index,
                                             mnce_check_report* out);
MNCE_API void mnce_check_suite_destroy(mnce_check_suite* suite);

MNCE_API mnce_status mnce_mc_feasibility(double theta_pos, int batch_size,
                                         double tau, long trials,
                                         unsigned long long seed, double* low,
                                         double* high);

/* ---- training simulator ---- */

typedef enum {
  MNCE_MODE_MOCO_LIKE = 0,
  MNCE_MODE_SIMCLR_LIKE = 1,
  MNCE_MODE_BYOL_LIKE = 2
} mnce_train_mode;

typedef struct {
  int mode; /* mnce_train_mode */
  mnce_margin_params params;
  mnce_scheme_config scheme;
  double lr;
  double ema_momentum;
  double sigma_class;
  double sigma_view;
  int batch;
  long steps;
  int n_classes;
  int n_samples;
  int input_dim;
  int embed_dim;
  unsigned long long seed;
} mnce_train_config;

MNCE_API void mnce_train_default_config(mnce_train_config* out);

typedef struct mnce_run_metrics mnce_run_metrics;

MNCE_API mnce_status mnce_train_run(const mnce_train_config* config,
                                    mnce_run_metrics** out);
MNCE_API long mnce_run_metrics_steps(const mnce_run_metrics* metrics);
/* out[5] = { loss, align, spread, acc, collapsed } */
MNCE_API mnce_status mnce_run_metrics_row(const mnce_run_metrics* metrics,
                                          long step, double out[5]);
MNCE_API void mnce_run_metrics_destroy(mnce_run_metrics* metrics);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* MNCE_H */
