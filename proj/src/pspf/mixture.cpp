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

#include "pspf/mixture.hpp"

#include <cmath>
#include <vector>

#include "pspf/error.hpp"

namespace pspf {

void HomoskedasticGaussianMixture::validate(double weight_tol) const {
  if (weights.size() != means.cols() || common_cov.rows() != means.rows() ||
      common_cov.cols() != means.rows()) {
    throw ShapeError("mixture: inconsistent shapes");
  }
  if (size() == 0) throw ShapeError("mixture: no components");
  if ((weights.array() < 0.0).any()) throw DomainError("mixture: negative weight");
  if (std::abs(weights.sum() - 1.0) > weight_tol) throw DomainError("mixture: weights do not sum to 1");
  if (!is_symmetric_psd(common_cov, 1e-12)) throw DomainError("mixture: covariance not symmetric PSD");
}

Moments HomoskedasticGaussianMixture::moments() const {
  Moments m;
  m.mean = means * weights;
  const Matrix centered = means.colwise() - m.mean;
  m.cov = symmetrize(common_cov + centered * weights.asDiagonal() * centered.transpose());
  return m;
}

double HomoskedasticGaussianMixture::log_density(const Vector& x) const {
  const Cholesky chol(common_cov, "mixture common_cov");
  std::vector<double> terms(static_cast<std::size_t>(size()));
  for (Eigen::Index k = 0; k < size(); ++k) {
    terms[static_cast<std::size_t>(k)] = std::log(weights(k)) + chol.log_density(x, means.col(k));
  }
  return log_sum_exp(terms);
}

HomoskedasticGaussianMixture HomoskedasticGaussianMixture::marginal(Eigen::Index coord) const {
  HomoskedasticGaussianMixture m;
  m.weights = weights;
  m.means = means.row(coord);
  m.common_cov = common_cov.block(coord, coord, 1, 1);
  return m;
}

double HomoskedasticGaussianMixture::cdf_1d(double x) const {
  if (dim() != 1) throw ShapeError("cdf_1d needs a one-dimensional mixture");
  const double sd = std::sqrt(std::max(common_cov(0, 0), 0.0));
  double c = 0.0;
  for (Eigen::Index k = 0; k < size(); ++k) {
    const double mu = means(0, k);
    if (sd > 0.0) {
      c += weights(k) * 0.5 * std::erfc(-(x - mu) / (sd * std::sqrt(2.0)));
    } else if (x >= mu) {
      c += weights(k);
    }
  }
  return c;
}

double HomoskedasticGaussianMixture::quantile_1d(double p) const {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("quantile_1d: p must lie in (0,1)");
  const double sd = std::sqrt(std::max(common_cov(0, 0), 0.0));
  double lo = means.row(0).minCoeff() - 40.0 * sd - 1e-12;
  double hi = means.row(0).maxCoeff() + 40.0 * sd + 1e-12;
  for (int it = 0; it < 200 && hi - lo > 1e-14 * (1.0 + std::abs(lo) + std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (cdf_1d(mid) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace pspf
