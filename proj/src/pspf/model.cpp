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

#include "pspf/model.hpp"

#include "pspf/error.hpp"

namespace pspf {

const Matrix& StateSpaceModel::measurement(int t) const {
  if (!measurement_by_time.empty()) {
    const auto idx = static_cast<std::size_t>(t - 1);
    if (t < 1 || idx >= measurement_by_time.size()) {
      throw ShapeError("no measurement matrix for time " + std::to_string(t));
    }
    return measurement_by_time[idx];
  }
  return measurement_matrix;
}

Vector StateSpaceModel::measurement_mean(const Eigen::Ref<const Vector>& x, int t) const {
  if (measurement_function) return measurement_function(x);
  return measurement(t) * x;
}

void StateSpaceModel::validate() const {
  if (dim_state <= 0 || dim_obs <= 0) throw ValidationError(name + ": dimensions must be positive");
  if (!transition) throw ValidationError(name + ": missing transition");
  if (!initial_sampler) throw ValidationError(name + ": missing initial sampler");
  if (obs_cov.rows() != dim_obs || obs_cov.cols() != dim_obs) {
    throw ShapeError(name + ": obs_cov must be dim_obs x dim_obs");
  }
  (void)Cholesky(obs_cov, "obs_cov");
  auto check_m = [&](const Matrix& m) {
    if (m.rows() != dim_obs || m.cols() != dim_state) {
      throw ShapeError(name + ": measurement matrix must be dim_obs x dim_state");
    }
  };
  if (!measurement_function) {
    if (measurement_by_time.empty()) check_m(measurement_matrix);
    for (const auto& m : measurement_by_time) check_m(m);
  }
  if (linear_dynamics) {
    const auto& ld = *linear_dynamics;
    if (ld.transition.rows() != dim_state || ld.transition.cols() != dim_state ||
        ld.offset.size() != dim_state || ld.noise_cov.rows() != dim_state ||
        ld.noise_cov.cols() != dim_state) {
      throw ShapeError(name + ": linear dynamics dimension mismatch");
    }
  }
  if (initial_law) {
    const auto& law = *initial_law;
    if (law.means.size() != law.size() || law.covs.size() != law.size() || law.size() == 0) {
      throw ShapeError(name + ": initial mixture has inconsistent component lists");
    }
    for (std::size_t k = 0; k < law.size(); ++k) {
      if (law.means[k].size() != dim_state || law.covs[k].rows() != dim_state) {
        throw ShapeError(name + ": initial mixture component dimension mismatch");
      }
    }
  }
}

}  // namespace pspf
