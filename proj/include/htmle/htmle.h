/*
 * C interface to the htmle library: two-step targeted minimum-loss
 * estimation for non-negative two-part outcomes.
 *
 * Objects are opaque handles created by htmle_* functions and released with
 * the matching *_free function. Every fallible call returns an htmle_status;
 * on failure htmle_last_error() returns a message for the calling thread that
 * stays valid until the next failing call on that thread.
 */
#ifndef HTMLE_H
#define HTMLE_H

#include <stddef.h>
#include <stdint.h>

#if defined(HTMLE_BUILDING_LIBRARY)
#define HTMLE_API __attribute__((visibility("default")))
#else
#define HTMLE_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes double as CLI exit codes. */
typedef enum htmle_status {
  HTMLE_OK = 0,
  HTMLE_ERR_CONFIG = 2,
  HTMLE_ERR_DATA = 3,
  HTMLE_ERR_NUMERIC = 4,
  HTMLE_ERR_INTERNAL = 5
} htmle_status;

/* Estimator bit mask. */
enum {
  HTMLE_EST_HTMLE = 1,
  HTMLE_EST_TMLE = 2,
  HTMLE_EST_AIPW = 4,
  HTMLE_EST_ALL = 7
};

enum { HTMLE_VAR_EIF = 0, HTMLE_VAR_BOOTSTRAP = 1 };
enum { HTMLE_RATIO_AUTO = 0, HTMLE_RATIO_ANALYTIC = 1, HTMLE_RATIO_CLASSIFICATION = 2 };
enum { HTMLE_FORMAT_TABLE = 0, HTMLE_FORMAT_JSON = 1, HTMLE_FORMAT_CSV = 2 };

/* Learner basis bit mask; each set bit adds one binomial GLM candidate. */
enum { HTMLE_BASIS_INTERCEPT = 1, HTMLE_BASIS_MAIN = 2, HTMLE_BASIS_SQUARES = 4, HTMLE_BASIS_QUADRATIC = 8 };

typedef struct htmle_dataset htmle_dataset;
typedef struct htmle_policy htmle_policy;
typedef struct htmle_result htmle_result;
typedef struct htmle_study htmle_study;

typedef struct htmle_fit_options {
  unsigned estimators; /* HTMLE_EST_* mask */
  int folds;           /* cross-fitting folds; 1 disables cross-fitting */
  int variance;        /* HTMLE_VAR_* */
  int bootstrap_b;
  uint64_t seed;
  unsigned bases;       /* HTMLE_BASIS_* mask for outcome and propensity fits */
  unsigned ratio_bases; /* HTMLE_BASIS_* mask for the density-ratio classifier */
  int selector_folds;
  int ratio_method; /* HTMLE_RATIO_* */
  double odds_cap;  /* <= 0 disables the cap */
  double pad;       /* outcome scaling pad fraction */
  int jobs;
} htmle_fit_options;

typedef struct htmle_estimate {
  int estimator; /* single HTMLE_EST_* bit */
  size_t n;
  double psi;
  double std_err;
  double ci_low;
  double ci_high;
  double eif_std_err;
  double mean_eif;
  double eps_m; /* NaN when not applicable */
  double eps_q;
  double eps;
  double min_r;
  double max_r;
  int converged;
  int degenerate_variance;
} htmle_estimate;

typedef struct htmle_simulate_options {
  const size_t* sizes;
  size_t sizes_count;
  const double* beta_ps;
  size_t beta_ps_count;
  const double* alpha_deltas;
  size_t alpha_deltas_count;
  unsigned estimators;
  int replicates;
  int folds;
  uint64_t seed;
  size_t oracle_draws;
  int jobs;
  unsigned bases;
  unsigned ratio_bases;
  int selector_folds;
  int ratio_method;
  double odds_cap; /* <= 0 disables the cap */
} htmle_simulate_options;

HTMLE_API const char* htmle_version(void);
HTMLE_API const char* htmle_last_error(void);
HTMLE_API void htmle_string_free(char* text);

/* Datasets. covariates and aux are comma-separated column lists; aux may be
 * NULL or empty. */
HTMLE_API htmle_status htmle_dataset_read_csv(const char* path, const char* outcome, const char* treatment,
                                              const char* covariates, const char* aux, htmle_dataset** out);
/* x is row-major n x p. */
HTMLE_API htmle_status htmle_dataset_from_arrays(size_t n, size_t p, const double* x, const double* t,
                                                 const double* y, htmle_dataset** out);
HTMLE_API htmle_status htmle_dataset_generate(size_t n, double beta_p, double alpha_delta, uint64_t seed,
                                              htmle_dataset** out);
HTMLE_API htmle_status htmle_dataset_write_csv(const htmle_dataset* data, const char* path);
HTMLE_API size_t htmle_dataset_rows(const htmle_dataset* data);
HTMLE_API size_t htmle_dataset_covariates(const htmle_dataset* data);
HTMLE_API double htmle_dataset_outcome_mean(const htmle_dataset* data);
HTMLE_API void htmle_dataset_free(htmle_dataset* data);

/* Policies: identity, static:<v>, dynamic:<cov>><thr>?<hi>:<lo>,
 * shift:<delta>[,cap=<v>|,cap=col:<name>], ipsi-down:<d>, ipsi-up:<d>.
 * seed drives the randomizer of IPSI policies. */
HTMLE_API htmle_status htmle_policy_parse(const char* text, uint64_t seed, htmle_policy** out);
/* Column the policy needs loaded as an aux column, or "" if none. */
HTMLE_API const char* htmle_policy_required_column(const htmle_policy* policy);
HTMLE_API const char* htmle_policy_describe(const htmle_policy* policy);
HTMLE_API void htmle_policy_free(htmle_policy* policy);

/* Estimation. */
HTMLE_API void htmle_fit_options_init(htmle_fit_options* options);
HTMLE_API htmle_status htmle_fit(const htmle_dataset* data, const htmle_policy* policy,
                                 const htmle_fit_options* options, htmle_result** out);
HTMLE_API size_t htmle_result_count(const htmle_result* result);
HTMLE_API htmle_status htmle_result_get(const htmle_result* result, size_t index, htmle_estimate* out);
/* Borrowed pointer valid until htmle_result_free. */
HTMLE_API htmle_status htmle_result_eif(const htmle_result* result, size_t index, const double** values, size_t* n);
/* Caller releases *out with htmle_string_free. */
HTMLE_API htmle_status htmle_result_format(const htmle_result* result, int format, char** out);
HTMLE_API htmle_status htmle_result_nuisance_csv(const htmle_result* result, char** out);
HTMLE_API void htmle_result_free(htmle_result* result);

/* Monte Carlo study over the built-in data-generating mechanism. */
HTMLE_API void htmle_simulate_options_init(htmle_simulate_options* options);
HTMLE_API htmle_status htmle_simulate(const htmle_simulate_options* options, const htmle_policy* policy,
                                      htmle_study** out);
HTMLE_API htmle_status htmle_study_format(const htmle_study* study, int format, char** out);
HTMLE_API size_t htmle_study_failures(const htmle_study* study);
HTMLE_API void htmle_study_free(htmle_study* study);
HTMLE_API htmle_status htmle_true_psi(const htmle_policy* policy, double alpha_delta, size_t draws, uint64_t seed,
                                      double beta_p, double* out);

#ifdef __cplusplus
}
#endif

#endif /* HTMLE_H */
