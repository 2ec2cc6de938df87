/* archgrad — bi-level architectural-gradient toolkit, C API.
 *
 * All entry points return ag_status; results come back as opaque handles
 * with accessor functions. Strings returned by accessors stay owned by the
 * handle and are valid until the handle is freed. ag_last_error() returns a
 * thread-local message describing the most recent failure.
 */
#ifndef ARCHGRAD_H
#define ARCHGRAD_H

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ag_status {
  AG_OK = 0,
  AG_ERR_INVALID_ARGUMENT = 1,
  AG_ERR_SHAPE_MISMATCH = 2,
  AG_ERR_NON_SCALAR_OUTPUT = 3,
  AG_ERR_DEGENERATE_DIRECTION = 4,
  AG_ERR_NON_CONVERGENCE = 5,
  AG_ERR_SINGULAR_HESSIAN = 6,
  AG_ERR_DIVERGED = 7,
  AG_ERR_NON_FINITE = 8,
  AG_ERR_CAP_EXCEEDED = 9,
  AG_ERR_CONFIG = 10,
  AG_ERR_IO = 11,
  AG_ERR_INTERNAL = 12
} ag_status;

const char* ag_version(void);
const char* ag_status_name(ag_status status);
const char* ag_last_error(void);

/* ---------- scalar toy problem ---------- */

typedef struct ag_toy_options {
  const char* estimator; /* first-order | second-order | amended | exact |
                            brute-force */
  double eta;            /* amending coefficient */
  double xi;             /* identity-approximation scale */
  double delta;          /* brute-force outer step */
  long steps;
  double alpha_lr;
  double alpha_init;
} ag_toy_options;

void ag_toy_options_init(ag_toy_options* opt);

typedef struct ag_toy_result ag_toy_result;

ag_status ag_toy_run(const ag_toy_options* opt, ag_toy_result** out);
int ag_toy_converged(const ag_toy_result* res);
long ag_toy_diverged_step(const ag_toy_result* res); /* -1 when none */
double ag_toy_final_alpha(const ag_toy_result* res);
const char* ag_toy_trajectory_csv(const ag_toy_result* res);
const char* ag_toy_summary_json(const ag_toy_result* res);
void ag_toy_result_free(ag_toy_result* res);

/* ---------- super-network search ---------- */

typedef struct ag_search_config ag_search_config;

ag_status ag_search_config_new(ag_search_config** out);
/* key = value lines, # comments; see the README for the schema */
ag_status ag_search_config_load(const char* path, ag_search_config** out);
ag_status ag_search_config_set(ag_search_config* cfg, const char* key,
                               const char* value);
/* canonical JSON of the resolved configuration */
const char* ag_search_config_json(ag_search_config* cfg);
void ag_search_config_free(ag_search_config* cfg);

typedef struct ag_search_result ag_search_result;

ag_status ag_search_run(const ag_search_config* cfg, ag_search_result** out);
const char* ag_search_trajectory_csv(const ag_search_result* res);
const char* ag_search_genotype_json(const ag_search_result* res);
double ag_search_final_val_acc(const ag_search_result* res);
double ag_search_final_skip_ratio(const ag_search_result* res);
double ag_search_final_none_weight(const ag_search_result* res);
void ag_search_result_free(ag_search_result* res);

typedef struct ag_retrain_report ag_retrain_report;

/* re-trains the discretized genotype from scratch; under hyper-parameter
 * consistency the training regimen is the search one verbatim */
ag_status ag_search_retrain(const ag_search_result* res,
                            const ag_search_config* cfg,
                            ag_retrain_report** out);
double ag_retrain_accuracy(const ag_retrain_report* rep);
const char* ag_retrain_json(const ag_retrain_report* rep);
void ag_retrain_report_free(ag_retrain_report* rep);

/* ---------- oracle cross-checks ---------- */

typedef struct ag_oracle_options {
  long instances;   /* cross-oracle identity instances */
  long dim_omega;   /* capped at 64 */
  long dim_alpha;
  double eta;
  unsigned long long seed;
  long commuting_instances; /* inner-product property, asserted */
  long general_instances;   /* inner-product sign, reported only */
  double condition_target;
} ag_oracle_options;

void ag_oracle_options_init(ag_oracle_options* opt);

typedef struct ag_oracle_report ag_oracle_report;

ag_status ag_oracle_check(const ag_oracle_options* opt,
                          ag_oracle_report** out);
int ag_oracle_passed(const ag_oracle_report* rep);
double ag_oracle_max_cross_error(const ag_oracle_report* rep);
double ag_oracle_min_commuting_ip(const ag_oracle_report* rep);
double ag_oracle_general_nonneg_fraction(const ag_oracle_report* rep);
long ag_oracle_singular_skipped(const ag_oracle_report* rep);
const char* ag_oracle_text(const ag_oracle_report* rep);
void ag_oracle_report_free(ag_oracle_report* rep);

/* ---------- gradient checking ---------- */

typedef struct ag_gradcheck_options {
  long seeds;
  double tolerance;
  double quad_tolerance;
  int inject_fault; /* testing hook: adds a known-bad gradient target */
} ag_gradcheck_options;

void ag_gradcheck_options_init(ag_gradcheck_options* opt);

typedef struct ag_gradcheck_report ag_gradcheck_report;

ag_status ag_gradcheck_run(const ag_gradcheck_options* opt,
                           ag_gradcheck_report** out);
int ag_gradcheck_passed(const ag_gradcheck_report* rep);
double ag_gradcheck_max_error(const ag_gradcheck_report* rep);
const char* ag_gradcheck_text(const ag_gradcheck_report* rep);
void ag_gradcheck_report_free(ag_gradcheck_report* rep);

#ifdef __cplusplus
}
#endif

#endif /* ARCHGRAD_H */
