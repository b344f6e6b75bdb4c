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


#include "pspf/pspf.h"

#include <algorithm>
#include <cstring>
#include <exception>
#include <string>

#include "pspf/bandwidth.hpp"
#include "pspf/error.hpp"
#include "pspf/harness.hpp"
#include "pspf/model_zoo.hpp"
#include "pspf/ps_update.hpp"
#include "pspf/swarm.hpp"

struct pspf_model {
  pspf::ModelSpec spec;
  pspf::StateSpaceModel base;
};

struct pspf_dataset {
  pspf::Dataset data;
};

struct pspf_filter_result {
  pspf::FilterRun run;
};

namespace {

thread_local std::string g_last_error;

pspf_status status_of(const std::exception& e) {
  using namespace pspf;
  if (dynamic_cast<const ValidationError*>(&e)) return PSPF_ERR_VALIDATION;
  if (dynamic_cast<const ShapeError*>(&e)) return PSPF_ERR_SHAPE;
  if (dynamic_cast<const SingularCovarianceError*>(&e)) return PSPF_ERR_SINGULAR_COVARIANCE;
  if (dynamic_cast<const DomainError*>(&e)) return PSPF_ERR_DOMAIN;
  if (dynamic_cast<const InsufficientSampleError*>(&e)) return PSPF_ERR_INSUFFICIENT_SAMPLE;
  if (dynamic_cast<const UnsupportedModelError*>(&e)) return PSPF_ERR_UNSUPPORTED_MODEL;
  if (dynamic_cast<const FilterFailure*>(&e)) return PSPF_ERR_FILTER_FAILURE;
  if (dynamic_cast<const IoError*>(&e)) return PSPF_ERR_IO;
  if (dynamic_cast<const nlohmann::json::exception*>(&e)) return PSPF_ERR_VALIDATION;
  return PSPF_ERR_INTERNAL;
}

template <class F>
pspf_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return PSPF_OK;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return status_of(e);
  } catch (...) {
    g_last_error = "unknown error";
    return PSPF_ERR_INTERNAL;
  }
}

pspf_status invalid(const char* what) {
  g_last_error = what;
  return PSPF_ERR_INVALID_ARGUMENT;
}

void copy_out(const double* src, std::size_t count, double* out, std::size_t len) {
  if (len < count) throw pspf::ShapeError("output buffer too small: need " + std::to_string(count));
  std::memcpy(out, src, count * sizeof(double));
}

pspf::Matrix matrix_from(const double* p, int rows, int cols) {
  return Eigen::Map<const pspf::Matrix>(p, rows, cols);
}

}  // namespace

extern "C" {

const char* pspf_version(void) { return pspf::kVersion; }

const char* pspf_last_error(void) { return g_last_error.c_str(); }

const char* pspf_status_name(pspf_status status) {
  switch (status) {
    case PSPF_OK: return "ok";
    case PSPF_ERR_INVALID_ARGUMENT: return "invalid argument";
    case PSPF_ERR_VALIDATION: return "validation error";
    case PSPF_ERR_SHAPE: return "shape error";
    case PSPF_ERR_SINGULAR_COVARIANCE: return "singular covariance";
    case PSPF_ERR_DOMAIN: return "domain error";
    case PSPF_ERR_INSUFFICIENT_SAMPLE: return "insufficient sample";
    case PSPF_ERR_UNSUPPORTED_MODEL: return "unsupported model";
    case PSPF_ERR_FILTER_FAILURE: return "filter failure";
    case PSPF_ERR_IO: return "i/o error";
    case PSPF_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

int pspf_exit_code(pspf_status status) {
  switch (status) {
    case PSPF_OK: return 0;
    case PSPF_ERR_SINGULAR_COVARIANCE:
    case PSPF_ERR_INSUFFICIENT_SAMPLE:
    case PSPF_ERR_FILTER_FAILURE:
    case PSPF_ERR_INTERNAL: return 3;
    default: return 2;
  }
}

pspf_status pspf_model_create(const char* model_json, pspf_model** out) {
  if (model_json == nullptr || out == nullptr) return invalid("model_json and out must not be NULL");
  *out = nullptr;
  return guarded([&] {
    auto spec = pspf::ModelSpec::parse(nlohmann::json::parse(model_json));
    auto base = spec.base();
    *out = new pspf_model{std::move(spec), std::move(base)};
  });
}

void pspf_model_destroy(pspf_model* model) { delete model; }

pspf_status pspf_model_dims(const pspf_model* model, const char* representation, int* dim_state, int* dim_obs) {
  if (model == nullptr) return invalid("model must not be NULL");
  return guarded([&] {
    const auto m = model->spec.build(representation ? representation : "original");
    if (dim_state) *dim_state = m.dim_state;
    if (dim_obs) *dim_obs = m.dim_obs;
  });
}

pspf_status pspf_simulate(const pspf_model* model, int T, uint64_t seed, pspf_dataset** out) {
  if (model == nullptr || out == nullptr) return invalid("model and out must not be NULL");
  *out = nullptr;
  return guarded([&] {
    auto d = pspf::simulate_dataset(model->base, T, seed);
    *out = new pspf_dataset{std::move(d)};
  });
}

pspf_status pspf_dataset_create(int dim_state, int dim_obs, int T, const double* states,
                                const double* observations, pspf_dataset** out) {
  if (out == nullptr || observations == nullptr) return invalid("observations and out must not be NULL");
  if (dim_state < 0 || dim_obs < 1 || T < 1) return invalid("need dim_state >= 0, dim_obs >= 1, T >= 1");
  if (dim_state > 0 && states == nullptr) return invalid("states must not be NULL when dim_state > 0");
  *out = nullptr;
  return guarded([&] {
    pspf::Dataset d;
    d.states = dim_state > 0 ? matrix_from(states, dim_state, T) : pspf::Matrix(0, T);
    d.observations = matrix_from(observations, dim_obs, T);
    *out = new pspf_dataset{std::move(d)};
  });
}

pspf_status pspf_dataset_read_csv(const char* path, pspf_dataset** out) {
  if (path == nullptr || out == nullptr) return invalid("path and out must not be NULL");
  *out = nullptr;
  return guarded([&] { *out = new pspf_dataset{pspf::read_dataset_csv(path)}; });
}

pspf_status pspf_dataset_write_csv(const pspf_dataset* data, const char* path) {
  if (data == nullptr || path == nullptr) return invalid("data and path must not be NULL");
  return guarded([&] { pspf::write_dataset_csv(path, data->data); });
}

void pspf_dataset_destroy(pspf_dataset* data) { delete data; }

pspf_status pspf_dataset_shape(const pspf_dataset* data, int* dim_state, int* dim_obs, int* T) {
  if (data == nullptr) return invalid("data must not be NULL");
  if (dim_state) *dim_state = static_cast<int>(data->data.states.rows());
  if (dim_obs) *dim_obs = static_cast<int>(data->data.observations.rows());
  if (T) *T = static_cast<int>(data->data.observations.cols());
  g_last_error.clear();
  return PSPF_OK;
}

pspf_status pspf_dataset_states(const pspf_dataset* data, double* out, size_t len) {
  if (data == nullptr || out == nullptr) return invalid("data and out must not be NULL");
  return guarded([&] {
    copy_out(data->data.states.data(), static_cast<std::size_t>(data->data.states.size()), out, len);
  });
}

pspf_status pspf_dataset_observations(const pspf_dataset* data, double* out, size_t len) {
  if (data == nullptr || out == nullptr) return invalid("data and out must not be NULL");
  return guarded([&] {
    copy_out(data->data.observations.data(), static_cast<std::size_t>(data->data.observations.size()), out, len);
  });
}

pspf_status pspf_run_filter(const pspf_model* model, const pspf_dataset* data, const char* filter_json,
                            uint64_t seed, pspf_filter_result** out) {
  if (model == nullptr || data == nullptr || out == nullptr) return invalid("model, data and out must not be NULL");
  *out = nullptr;
  return guarded([&] {
    const auto j = filter_json ? nlohmann::json::parse(filter_json) : nlohmann::json::object();
    auto fs = pspf::FilterSpec::parse(j, model->spec);
    fs.config.seed = seed;
    const auto m = model->spec.build(fs.representation);
    *out = new pspf_filter_result{pspf::run_filter(fs.kind, m, data->data.observations, fs.config)};
  });
}

void pspf_filter_result_destroy(pspf_filter_result* result) { delete result; }

pspf_status pspf_filter_result_loglik(const pspf_filter_result* result, double* out) {
  if (result == nullptr || out == nullptr) return invalid("result and out must not be NULL");
  *out = result->run.loglik;
  g_last_error.clear();
  return PSPF_OK;
}

pspf_status pspf_filter_result_steps(const pspf_filter_result* result, int* T) {
  if (result == nullptr || T == nullptr) return invalid("result and T must not be NULL");
  *T = static_cast<int>(result->run.increments.size());
  g_last_error.clear();
  return PSPF_OK;
}

pspf_status pspf_filter_result_increments(const pspf_filter_result* result, double* out, size_t len) {
  if (result == nullptr || out == nullptr) return invalid("result and out must not be NULL");
  return guarded([&] { copy_out(result->run.increments.data(), result->run.increments.size(), out, len); });
}

pspf_status pspf_filter_result_b_trace(const pspf_filter_result* result, double* out, size_t len) {
  if (result == nullptr || out == nullptr) return invalid("result and out must not be NULL");
  return guarded([&] {
    if (result->run.b_trace.empty()) throw pspf::UnsupportedModelError(result->run.filter + " has no smoothing parameter");
    copy_out(result->run.b_trace.data(), result->run.b_trace.size(), out, len);
  });
}

pspf_status pspf_filter_result_final_mean(const pspf_filter_result* result, double* out, size_t len,
                                          size_t* written) {
  if (result == nullptr || out == nullptr) return invalid("result and out must not be NULL");
  return guarded([&] {
    const auto count = static_cast<std::size_t>(result->run.final_mean.size());
    copy_out(result->run.final_mean.data(), count, out, len);
    if (written) *written = count;
  });
}

pspf_status pspf_exact_loglik(const pspf_model* model, const pspf_dataset* data, double* out) {
  if (model == nullptr || data == nullptr || out == nullptr) return invalid("model, data and out must not be NULL");
  return guarded([&] { *out = pspf::exact_loglik(model->base, data->data.observations); });
}

pspf_status pspf_ps_update(int d, int n, const double* particles, int dy, const double* y, const double* M,
                           const double* obs_cov, double b, double* log_p_y, double* post_means, double* post_cov,
                           double* post_weights) {
  if (particles == nullptr || y == nullptr || M == nullptr || obs_cov == nullptr || log_p_y == nullptr) {
    return invalid("particles, y, M, obs_cov and log_p_y must not be NULL");
  }
  if (d < 1 || n < 1 || dy < 1) return invalid("dimensions must be positive");
  return guarded([&] {
    const pspf::Swarm swarm(matrix_from(particles, d, n));
    const pspf::Vector yv = Eigen::Map<const pspf::Vector>(y, dy);
    const auto res = pspf::ps_update(swarm, yv, matrix_from(M, dy, d), matrix_from(obs_cov, dy, dy), b);
    *log_p_y = res.log_p_y;
    const auto& post = res.posterior;
    if (post_means) std::memcpy(post_means, post.means.data(), sizeof(double) * post.means.size());
    if (post_cov) std::memcpy(post_cov, post.common_cov.data(), sizeof(double) * post.common_cov.size());
    if (post_weights) std::memcpy(post_weights, post.weights.data(), sizeof(double) * post.weights.size());
  });
}

pspf_status pspf_select_bandwidth(int d, int n, const double* particles, int dy, const double* y, const double* M,
                                  const double* obs_cov, uint64_t seed, double* b, double* criterion) {
  if (particles == nullptr || y == nullptr || M == nullptr || obs_cov == nullptr || b == nullptr) {
    return invalid("particles, y, M, obs_cov and b must not be NULL");
  }
  if (d < 1 || n < 1 || dy < 1) return invalid("dimensions must be positive");
  return guarded([&] {
    const pspf::Swarm swarm(matrix_from(particles, d, n));
    const pspf::Vector yv = Eigen::Map<const pspf::Vector>(y, dy);
    pspf::RngStream rng = pspf::RngStream::derive(seed, pspf::StreamPurpose::kEm, {0});
    const auto sel = pspf::select_bandwidth(swarm, yv, matrix_from(M, dy, d), matrix_from(obs_cov, dy, dy),
                                            pspf::BandwidthOptions{}, rng);
    *b = sel.b;
    if (criterion) *criterion = sel.terms.total();
  });
}

pspf_status pspf_cmd_run(const char* command, const char* config_path, const pspf_overrides* overrides,
                         char* summary, size_t summary_len) {
  if (command == nullptr || config_path == nullptr) return invalid("command and config_path must not be NULL");
  if (summary != nullptr && summary_len > 0) summary[0] = '\0';
  return guarded([&] {
    pspf::Overrides ov;
    if (overrides != nullptr) {
      if (overrides->has_seed) ov.seed = overrides->seed;
      if (overrides->out != nullptr) ov.out = std::string(overrides->out);
      if (overrides->threads > 0) ov.threads = overrides->threads;
      if (overrides->replications > 0) ov.replications = overrides->replications;
    }
    const std::string text = pspf::run_command(command, config_path, ov);
    if (summary != nullptr && summary_len > 0) {
      const std::size_t k = std::min(text.size(), summary_len - 1);
      std::memcpy(summary, text.data(), k);
      summary[k] = '\0';
    }
  });
}

}  // extern "C"
