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

#ifndef PSPF_MODEL_ZOO_HPP
#define PSPF_MODEL_ZOO_HPP

#include <optional>
#include <string>

#include "pspf/filters.hpp"
#include "pspf/model.hpp"
#include "pspf/ps_update.hpp"
#include "pspf/rng.hpp"
#include "pspf/sml.hpp"

namespace pspf {

/// x_t = 0.95 x_{t-1} + N(0, 0.1 * ones + 0.2 I), y_t = x_t + N(0, xi^2 I), with
/// x_0 an equal mixture of N(0, I), N(1, I) and N((-1, 1, -1, ...), I).
StateSpaceModel linear_mixture_model(int dim, double xi);

/// x_t = x_{t-1} / 2 + sqrt(3/4) e_t, y_t = x_t^2 / 20 + eta_t / 2, x_0 ~ N(0, 1).
StateSpaceModel squared_obs_model();
/// The same model with h(x) = x^2/20 moved into the state. The state is
/// (x, x^2/20 + r eta / 2) and y observes the second coordinate with noise
/// sqrt(1 - r^2) / 2; r = 1/sqrt(2) splits the noise evenly.
AugmentedModel squared_obs_augmented(double r = kEvenSplit);

struct CevParams {
  double alpha = 0.0;
  double beta = 0.0;
  double sigma = 0.0;
  double gamma = 0.0;
  double sigma_y = 0.0;

  /// From (log alpha, log beta, log sigma, log gamma, log sigma_y).
  static CevParams from_log(const Vector& theta);
  [[nodiscard]] Vector to_log() const;
};

struct CevOptions {
  double delta = 1.0 / 252.0;
  /// Standard deviation of x_0 around alpha / beta. Defaults to the
  /// stationary scale sigma (alpha/beta)^gamma / sqrt(2 beta).
  std::optional<double> x0_sd;
  double floor = 1e-8;
  int substeps = 1;
};

/// Euler scheme for dX = (alpha - beta X) dt + sigma X^gamma dB observed with
/// N(0, sigma_y^2) noise. States falling below the floor are set to the floor.
StateSpaceModel cev_model(const CevParams& params, const CevOptions& options = {});
/// Parameter values used for simulation studies (log scale:
/// 1.570, 0.815, -1.612, 0.486, -3.739).
CevParams cev_reference_params();
ModelFamily cev_family(const CevOptions& options = {});

/// x_t iid N(0, s2), y_t = x_t + N(0, 1). The likelihood is available in closed form.
StateSpaceModel iid_variance_model(double s2);
/// theta = log s2.
ModelFamily iid_variance_family();

struct SimulationResult {
  Matrix states;        ///< d_x x T
  Matrix observations;  ///< d_y x T
  int floor_hits = 0;   ///< steps at which the state floor was active
};

/// Draws x_0 from the initial law, then (x_t, y_t) for t = 1..T from one stream.
SimulationResult simulate(const StateSpaceModel& model, int T, RngStream& rng);

/// Exact log p(Y_T) for models with linear dynamics and a Gaussian mixture initial law.
double exact_loglik(const StateSpaceModel& model, const Matrix& obs);

/// High-particle SIR reference on the given representation.
FilterRun reference_sir(const StateSpaceModel& model, const Matrix& obs, Eigen::Index n,
                        std::uint64_t seed, const std::vector<double>& quantile_levels = {},
                        int quantile_coordinate = 0);
double reference_sir_loglik(const StateSpaceModel& model, const Matrix& obs,
                            Eigen::Index n = 1000000, std::uint64_t seed = 0);

/// Samples from a Gaussian mixture law.
void sample_law(const GaussianMixtureLaw& law, Eigen::Ref<Vector> out, RngStream& rng);

}  // namespace pspf

#endif  // PSPF_MODEL_ZOO_HPP
