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

#ifndef PSPF_FILTERS_HPP
#define PSPF_FILTERS_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pspf/bandwidth.hpp"
#include "pspf/linalg.hpp"
#include "pspf/mixture.hpp"
#include "pspf/model.hpp"

namespace pspf {

enum class FilterKind { kPspf, kSir, kEnkf, kMisePre, kMisePost, kAsir, kFasir };

enum class ResamplerKind {
  /// Continuous grid sampler when the transition reads one or two
  /// coordinates, direct mixture sampling otherwise.
  kAuto,
  kDirect,
  kContinuous1d,
  kContinuous2d,
  /// Multinomial component choice. For mixture posteriors this is direct
  /// sampling; with zero kernel covariance it is a plain bootstrap.
  kMultinomial,
};

std::string_view to_string(FilterKind kind);
std::string_view to_string(ResamplerKind kind);
/// Accepts the names produced by to_string, case-insensitively. Throws ValidationError.
FilterKind parse_filter_kind(std::string_view name);
ResamplerKind parse_resampler_kind(std::string_view name);

struct FilterConfig {
  Eigen::Index n = 10000;
  ResamplerKind resampler = ResamplerKind::kAuto;
  int grid_1d = 1024;
  int grid_2d = 256;
  BandwidthOptions bandwidth;
  /// Skips bandwidth selection and uses this b at every step (PSPF, MISE-Post).
  std::optional<double> fixed_b;
  /// Multiplier on the Gaussian-reference MISE bandwidth.
  double mise_scale = 1.0;
  std::uint64_t seed = 0;
  bool keep_swarms = false;
  /// Record the criterion terms at the selected b for every step.
  bool keep_criterion = false;
  /// When >= 0, record the 2.5% and 97.5% filter quantiles of this coordinate at every step.
  int band_coordinate = -1;
  /// Coordinate and levels of the filter quantiles reported at t = T.
  int quantile_coordinate = 0;
  std::vector<double> quantile_levels;

  /// Throws ValidationError for impossible settings.
  void validate(FilterKind kind) const;
};

struct FilterRun {
  std::string filter;
  double loglik = 0.0;
  std::vector<double> increments;          ///< log p(y_t | Y_{t-1}) estimates
  std::vector<double> b_trace;             ///< smoothing parameter per step (pre-smoothed filters)
  std::vector<CriterionTerms> criterion;   ///< when FilterConfig::keep_criterion
  std::vector<std::array<double, 2>> band; ///< when FilterConfig::band_coordinate >= 0
  std::vector<Matrix> swarms;              ///< equally weighted filter swarms, d x n per step
  Vector final_mean;                       ///< filter mean of x_T
  std::vector<double> final_quantiles;     ///< at FilterConfig::quantile_levels
  int grid_widenings = 0;
  int grid_truncations = 0;
  int em_fallbacks = 0;
  double seconds = 0.0;
};

/// Observations are d_y x T, one column per time step.
FilterRun run_filter(FilterKind kind, const StateSpaceModel& model, const Matrix& obs,
                     const FilterConfig& config);

/// Pre-smoothed particle filter: propagate, select b, PS update, resample.
FilterRun run_pspf(const StateSpaceModel& model, const Matrix& obs, const FilterConfig& config);
/// Bootstrap filter with multinomial resampling.
FilterRun run_sir(const StateSpaceModel& model, const Matrix& obs, const FilterConfig& config);
/// The PS filter with b = 0 at every step.
FilterRun run_enkf(const StateSpaceModel& model, const Matrix& obs, const FilterConfig& config);
/// PS filter with b fixed by the Gaussian-reference MISE bandwidth.
FilterRun run_mise_pre(const StateSpaceModel& model, const Matrix& obs, const FilterConfig& config);
/// SIR weights, then shrunk-kernel smoothing of the weighted sample before resampling.
FilterRun run_mise_post(const StateSpaceModel& model, const Matrix& obs, const FilterConfig& config);
/// Auxiliary particle filter with first-stage weights p(y_t | E[x_t | x_{t-1}]).
FilterRun run_asir(const StateSpaceModel& model, const Matrix& obs, const FilterConfig& config);
/// Fully adapted auxiliary filter for Gaussian transitions and linear measurements.
FilterRun run_fasir(const StateSpaceModel& model, const Matrix& obs, const FilterConfig& config);

/// log p(y | x_i) for every column of `states`.
Vector measurement_log_weights(const StateSpaceModel& model, const Matrix& states, const Vector& y,
                               int t);

/// True when E[x_t | x_{t-1}] (and the full Gaussian law) is available.
bool has_gaussian_transition(const StateSpaceModel& model);

}  // namespace pspf

#endif  // PSPF_FILTERS_HPP
