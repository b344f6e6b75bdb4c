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

#ifndef PSPF_KALMAN_HPP
#define PSPF_KALMAN_HPP

#include <vector>

#include "pspf/linalg.hpp"
#include "pspf/model.hpp"

namespace pspf {

struct KalmanResult {
  double loglik = 0.0;
  std::vector<double> increments;
  std::vector<Vector> filtered_means;
  std::vector<Matrix> filtered_covs;
};

/// Exact Kalman recursion for a linear-Gaussian model started from N(mean0, cov0).
/// `obs` holds one observation per column (d_y x T).
KalmanResult kalman_filter(const StateSpaceModel& model, const Vector& mean0, const Matrix& cov0,
                           const Matrix& obs);

/// Exact log p(Y_T). The model must carry linear dynamics and a single-component
/// Gaussian initial law.
double kalman_loglik(const StateSpaceModel& model, const Matrix& obs);

/// log sum_k q_k p(Y_T | x_0 ~ component k), one Kalman pass per component of
/// the initial mixture.
double kalman_mixture_loglik(const StateSpaceModel& model, const Matrix& obs);

}  // namespace pspf

#endif  // PSPF_KALMAN_HPP
