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

#ifndef PSPF_MODEL_HPP
#define PSPF_MODEL_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pspf/linalg.hpp"
#include "pspf/rng.hpp"

namespace pspf {

/// Finite Gaussian mixture with per-component covariances. Used for initial
/// laws; posterior mixtures share one covariance (see mixture.hpp).
struct GaussianMixtureLaw {
  std::vector<double> weights;
  std::vector<Vector> means;
  std::vector<Matrix> covs;

  [[nodiscard]] std::size_t size() const { return weights.size(); }
};

/// x_t = transition * x_{t-1} + offset + N(0, noise_cov).
struct LinearGaussianDynamics {
  Matrix transition;
  Vector offset;
  Matrix noise_cov;
};

/// x_t | x_{t-1} ~ N(mean(x_{t-1}), cov(x_{t-1})). Advertises that ASIR
/// (mean only) and FASIR (full law) can run on the model.
struct GaussianTransition {
  std::function<void(const Vector& prev, int t, Vector& mean, Matrix& cov)> moments;
};

/// State-space model with a Gaussian measurement equation.
///
/// Columns of state matrices are particles/time points. The measurement is
/// y_t = M x_t + eps_t unless `measurement_function` is set, in which case
/// y_t = h(x_t) + eps_t; filters built on the pre-smoothed update require the
/// linear form (augment the state first, see ps_update.hpp).
struct StateSpaceModel {
  using Transition = std::function<void(Eigen::Ref<Vector> state, RngStream& rng, int t)>;
  using InitialSampler = std::function<void(Eigen::Ref<Vector> state, RngStream& rng)>;
  using MeasurementFunction = std::function<Vector(const Eigen::Ref<const Vector>& x)>;

  std::string name;
  int dim_state = 0;
  int dim_obs = 0;
  Transition transition;
  InitialSampler initial_sampler;
  Matrix measurement_matrix;
  /// Optional per-time-step measurement matrices (index t-1); overrides measurement_matrix.
  std::vector<Matrix> measurement_by_time;
  Matrix obs_cov;
  MeasurementFunction measurement_function;

  std::optional<LinearGaussianDynamics> linear_dynamics;
  std::optional<GaussianMixtureLaw> initial_law;
  std::optional<GaussianTransition> gaussian_transition;
  /// Number of leading state coordinates the transition reads; 0 means all.
  /// Trailing coordinates are regenerated at every step, so resamplers only
  /// need the marginal law of the leading block.
  int markov_dims = 0;
  /// Lower bound the simulator clamps states to, if any.
  std::optional<double> state_floor;

  [[nodiscard]] int carried_dims() const { return markov_dims > 0 ? markov_dims : dim_state; }

  [[nodiscard]] bool has_linear_measurement() const { return !measurement_function; }
  [[nodiscard]] const Matrix& measurement(int t) const;
  /// Mean of y_t given x_t.
  [[nodiscard]] Vector measurement_mean(const Eigen::Ref<const Vector>& x, int t) const;

  /// Throws ShapeError / SingularCovarianceError / ValidationError on inconsistency.
  void validate() const;
};

}  // namespace pspf

#endif  // PSPF_MODEL_HPP
