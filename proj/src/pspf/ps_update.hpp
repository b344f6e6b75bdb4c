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

#ifndef PSPF_PS_UPDATE_HPP
#define PSPF_PS_UPDATE_HPP

#include "pspf/linalg.hpp"
#include "pspf/mixture.hpp"
#include "pspf/model.hpp"
#include "pspf/swarm.hpp"

namespace pspf {

/// The smoothing coordinate b in [0,1] and the quantities derived from it.
/// b = 1 keeps the particles as point masses, b = 0 collapses the kernel
/// estimate onto N(mean, cov) of the swarm.
struct ShrinkageParams {
  double b = 1.0;
  double a = 0.0;        ///< 1 - b
  double g_prime = 0.0;  ///< 1 - b^2

  /// Throws DomainError unless 0 <= b <= 1.
  static ShrinkageParams from_b(double b);
  /// Conventional kernel bandwidth h = sqrt(b^-2 - 1); infinite at b = 0.
  [[nodiscard]] double bandwidth() const;
};

/// Shrunk kernel estimate of the swarm density: uniform weights, means
/// (1-b) mean + b x_i and common covariance (1-b^2) cov. Its mean and
/// covariance equal the swarm moments for every b.
HomoskedasticGaussianMixture shrunk_kernel(const Swarm& swarm, double b);
HomoskedasticGaussianMixture shrunk_kernel(const Matrix& particles, const Moments& moments, double b);

struct PsUpdateResult {
  double p_y = 0.0;      ///< may underflow to 0; use log_p_y
  double log_p_y = 0.0;
  HomoskedasticGaussianMixture posterior;
  Vector log_raw_weights;  ///< log W_i
  Matrix gain;             ///< Q
  double b = 1.0;

  /// W_i in natural scale (may underflow).
  [[nodiscard]] Vector raw_weights() const { return log_raw_weights.array().exp(); }
};

/// Pre-smoothed Bayes update of the shrunk kernel prior against
/// y ~ N(M x, obs_cov). One factorization of obs_cov + M G M' serves all n
/// components.
PsUpdateResult ps_update(const Swarm& swarm, const Vector& y, const Matrix& measurement,
                         const Matrix& obs_cov, double b);
PsUpdateResult ps_update(const Matrix& particles, const Moments& moments, const Vector& y,
                         const Matrix& measurement, const Matrix& obs_cov, double b);

/// Mean and covariance of the posterior mixture.
Moments posterior_moments(const PsUpdateResult& result);

/// A model whose nonlinear measurement h(x) has been moved into the state:
/// x' = [x, h(x) + eta], eta ~ N(0, r^2 obs_cov), observed as
/// y = [0 I] x' + N(0, (1 - r^2) obs_cov).
struct AugmentedModel {
  StateSpaceModel model;
  double r = 0.0;
  int base_dim = 0;
};

/// Builds the augmented linear-measurement model. A base model with a linear
/// measurement is accepted too (h(x) = M x); linear dynamics and Gaussian
/// initial laws carry over so the exact Kalman likelihood stays available.
AugmentedModel augment_model(const StateSpaceModel& base, double r);

/// Split factor that divides the measurement variance evenly.
inline const double kEvenSplit = 1.0 / std::sqrt(2.0);

}  // namespace pspf

#endif  // PSPF_PS_UPDATE_HPP
