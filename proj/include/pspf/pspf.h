// Copyright 2026 The PSPF Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


/* C interface to the pre-smoothed particle filter library.
 *
 * All matrices are column-major with one column per particle or per time
 * step: a d x n particle array stores particle i at p[i*d .. i*d + d - 1].
 * Functions return PSPF_OK or an error status; pspf_last_error() then holds a
 * message for the calling thread. Handles are opaque and owned by the caller.
 */

#ifndef PSPF_PSPF_H
#define PSPF_PSPF_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define PSPF_API __declspec(dllexport)
#else
#define PSPF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pspf_status {
  PSPF_OK = 0,
  PSPF_ERR_INVALID_ARGUMENT = 1,
  PSPF_ERR_VALIDATION = 2,
  PSPF_ERR_SHAPE = 3,
  PSPF_ERR_SINGULAR_COVARIANCE = 4,
  PSPF_ERR_DOMAIN = 5,
  PSPF_ERR_INSUFFICIENT_SAMPLE = 6,
  PSPF_ERR_UNSUPPORTED_MODEL = 7,
  PSPF_ERR_FILTER_FAILURE = 8,
  PSPF_ERR_IO = 9,
  PSPF_ERR_INTERNAL = 10
} pspf_status;

typedef struct pspf_model pspf_model;
typedef struct pspf_dataset pspf_dataset;
typedef struct pspf_filter_result pspf_filter_result;

PSPF_API const char* pspf_version(void);
/* Message of the last failed call on this thread; empty after a success. */
PSPF_API const char* pspf_last_error(void);
PSPF_API const char* pspf_status_name(pspf_status status);
/* Process exit code for a status: 0 success, 2 invalid input, 3 runtime failure. */
PSPF_API int pspf_exit_code(pspf_status status);

/* Models are described by JSON, e.g. {"id":"linear_mixture","dim":2,"xi":0.01}.
 * Known ids: linear_mixture, squared_obs, cev, iid_variance. */
PSPF_API pspf_status pspf_model_create(const char* model_json, pspf_model** out);
PSPF_API void pspf_model_destroy(pspf_model* model);
/* representation is "original" or "augmented"; NULL means "original". */
PSPF_API pspf_status pspf_model_dims(const pspf_model* model, const char* representation, int* dim_state,
                                     int* dim_obs);

PSPF_API pspf_status pspf_simulate(const pspf_model* model, int T, uint64_t seed, pspf_dataset** out);
/* states is dim_state x T (may be NULL when dim_state is 0), observations dim_obs x T. */
PSPF_API pspf_status pspf_dataset_create(int dim_state, int dim_obs, int T, const double* states,
                                         const double* observations, pspf_dataset** out);
PSPF_API pspf_status pspf_dataset_read_csv(const char* path, pspf_dataset** out);
PSPF_API pspf_status pspf_dataset_write_csv(const pspf_dataset* data, const char* path);
PSPF_API void pspf_dataset_destroy(pspf_dataset* data);
PSPF_API pspf_status pspf_dataset_shape(const pspf_dataset* data, int* dim_state, int* dim_obs, int* T);
PSPF_API pspf_status pspf_dataset_states(const pspf_dataset* data, double* out, size_t len);
PSPF_API pspf_status pspf_dataset_observations(const pspf_dataset* data, double* out, size_t len);

/* filter_json uses the config-file filter schema, e.g.
 * {"type":"PSPF","n":10000,"resampler":"auto"}. */
PSPF_API pspf_status pspf_run_filter(const pspf_model* model, const pspf_dataset* data, const char* filter_json,
                                     uint64_t seed, pspf_filter_result** out);
PSPF_API void pspf_filter_result_destroy(pspf_filter_result* result);
PSPF_API pspf_status pspf_filter_result_loglik(const pspf_filter_result* result, double* out);
PSPF_API pspf_status pspf_filter_result_steps(const pspf_filter_result* result, int* T);
PSPF_API pspf_status pspf_filter_result_increments(const pspf_filter_result* result, double* out, size_t len);
/* Smoothing parameter per step; PSPF, EnKF and MISE-Pre only. */
PSPF_API pspf_status pspf_filter_result_b_trace(const pspf_filter_result* result, double* out, size_t len);
PSPF_API pspf_status pspf_filter_result_final_mean(const pspf_filter_result* result, double* out, size_t len,
                                                   size_t* written);

/* Exact log-likelihood for linear-Gaussian models with Gaussian-mixture initial laws. */
PSPF_API pspf_status pspf_exact_loglik(const pspf_model* model, const pspf_dataset* data, double* out);

/* Pre-smoothed update of a d x n swarm against y ~ N(M x, obs_cov) at smoothing
 * parameter b. M is dy x d, obs_cov dy x dy. Optional outputs (NULL to skip):
 * post_means d x n, post_cov d x d, post_weights n. */
PSPF_API pspf_status pspf_ps_update(int d, int n, const double* particles, int dy, const double* y,
                                    const double* M, const double* obs_cov, double b, double* log_p_y,
                                    double* post_means, double* post_cov, double* post_weights);

/* Criterion-based smoothing parameter with default options. criterion may be NULL. */
PSPF_API pspf_status pspf_select_bandwidth(int d, int n, const double* particles, int dy, const double* y,
                                           const double* M, const double* obs_cov, uint64_t seed, double* b,
                                           double* criterion);

typedef struct pspf_overrides {
  int has_seed;
  uint64_t seed;
  const char* out;   /* NULL keeps the config value */
  int threads;       /* 0 keeps the config value */
  int replications;  /* 0 keeps the config value */
} pspf_overrides;

/* Runs a harness command ("simulate", "experiment", "estimate",
 * "bandwidth-trace") from a JSON config file. summary receives a one-line
 * report and may be NULL. */
PSPF_API pspf_status pspf_cmd_run(const char* command, const char* config_path, const pspf_overrides* overrides,
                                  char* summary, size_t summary_len);

#ifdef __cplusplus
}
#endif

#endif /* PSPF_PSPF_H */
