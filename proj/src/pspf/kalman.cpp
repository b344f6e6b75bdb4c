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

#include "pspf/kalman.hpp"

#include <cmath>

#include "pspf/error.hpp"

namespace pspf {

namespace {

void require_linear(const StateSpaceModel& model) {
  if (!model.linear_dynamics) {
    throw UnsupportedModelError(model.name + ": Kalman recursion needs linear dynamics");
  }
  if (!model.has_linear_measurement()) {
    throw UnsupportedModelError(model.name + ": Kalman recursion needs a linear measurement");
  }
  if (!model.initial_law) {
    throw UnsupportedModelError(model.name + ": Kalman recursion needs a Gaussian initial law");
  }
}

}  // namespace

KalmanResult kalman_filter(const StateSpaceModel& model, const Vector& mean0, const Matrix& cov0,
                           const Matrix& obs) {
  if (!model.linear_dynamics) {
    throw UnsupportedModelError(model.name + ": Kalman recursion needs linear dynamics");
  }
  if (obs.rows() != model.dim_obs) throw ShapeError("kalman_filter: observation dimension mismatch");
  if (mean0.size() != model.dim_state || cov0.rows() != model.dim_state) {
    throw ShapeError("kalman_filter: initial state dimension mismatch");
  }
  const auto& dyn = *model.linear_dynamics;
  KalmanResult out;
  Vector mean = mean0;
  Matrix cov = cov0;
  for (Eigen::Index t = 1; t <= obs.cols(); ++t) {
    mean = dyn.transition * mean + dyn.offset;
    cov = symmetrize(dyn.transition * cov * dyn.transition.transpose() + dyn.noise_cov);
    const Matrix& m = model.measurement(static_cast<int>(t));
    const Matrix s = symmetrize(m * cov * m.transpose() + model.obs_cov);
    const Cholesky chol(s, "Kalman innovation covariance");
    const Vector innovation = obs.col(t - 1) - m * mean;
    const double inc = chol.log_density_residual(innovation);
    const Matrix gain = chol.solve(Matrix(m * cov)).transpose();
    mean += gain * innovation;
    cov = symmetrize(cov - gain * m * cov);
    out.increments.push_back(inc);
    out.loglik += inc;
    out.filtered_means.push_back(mean);
    out.filtered_covs.push_back(cov);
  }
  return out;
}

double kalman_loglik(const StateSpaceModel& model, const Matrix& obs) {
  require_linear(model);
  const auto& law = *model.initial_law;
  if (law.size() != 1) {
    throw UnsupportedModelError(model.name + ": kalman_loglik needs a single Gaussian initial law");
  }
  return kalman_filter(model, law.means[0], law.covs[0], obs).loglik;
}

double kalman_mixture_loglik(const StateSpaceModel& model, const Matrix& obs) {
  require_linear(model);
  const auto& law = *model.initial_law;
  std::vector<double> terms;
  terms.reserve(law.size());
  for (std::size_t k = 0; k < law.size(); ++k) {
    if (law.weights[k] <= 0.0) continue;
    terms.push_back(std::log(law.weights[k]) +
                    kalman_filter(model, law.means[k], law.covs[k], obs).loglik);
  }
  return log_sum_exp(terms);
}

}  // namespace pspf
