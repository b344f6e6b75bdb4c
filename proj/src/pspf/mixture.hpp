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

#ifndef PSPF_MIXTURE_HPP
#define PSPF_MIXTURE_HPP

#include "pspf/linalg.hpp"
#include "pspf/swarm.hpp"

namespace pspf {

/// Weighted Gaussian mixture whose components share one covariance.
/// Component means are stored one per column (d x K).
struct HomoskedasticGaussianMixture {
  Vector weights;
  Matrix means;
  Matrix common_cov;

  [[nodiscard]] Eigen::Index dim() const { return means.rows(); }
  [[nodiscard]] Eigen::Index size() const { return means.cols(); }

  /// Throws DomainError / ShapeError if weights are negative, do not sum to
  /// one within `weight_tol`, or the covariance is not symmetric PSD.
  void validate(double weight_tol = 1e-12) const;

  [[nodiscard]] Moments moments() const;
  [[nodiscard]] double log_density(const Vector& x) const;
  /// Mixture of the coordinate `coord` alone.
  [[nodiscard]] HomoskedasticGaussianMixture marginal(Eigen::Index coord) const;
  /// CDF of a one-dimensional mixture.
  [[nodiscard]] double cdf_1d(double x) const;
  /// Quantile of a one-dimensional mixture, by bisection on cdf_1d.
  [[nodiscard]] double quantile_1d(double p) const;
};

}  // namespace pspf

#endif  // PSPF_MIXTURE_HPP
