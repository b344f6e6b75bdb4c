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

#ifndef PSPF_RESAMPLING_HPP
#define PSPF_RESAMPLING_HPP

#include <cstdint>
#include <vector>

#include "pspf/linalg.hpp"
#include "pspf/mixture.hpp"
#include "pspf/rng.hpp"
#include "pspf/swarm.hpp"

namespace pspf {

/// What a continuous resampler did about mass outside its grid.
struct ResampleDiagnostics {
  double tail_mass = 0.0;  ///< mixture mass outside the final grid (estimate)
  bool widened = false;    ///< grid was widened once
  bool truncated = false;  ///< tail mass still above tolerance after widening
};

/// Regular grid over one coordinate with cell masses and the midpoint-rule CDF.
/// Cell j is centred at lo + j * step(); cdf(j) is the mass up to its right edge.
struct Grid1D {
  double lo = 0.0;
  double hi = 0.0;
  int n_g = 0;
  Vector values;  ///< density at the grid points
  Vector cdf;     ///< nondecreasing, last entry exactly 1

  [[nodiscard]] double step() const { return (hi - lo) / static_cast<double>(n_g - 1); }
  /// Inverse of the piecewise-linear CDF through the cell edges.
  [[nodiscard]] double invert(double u) const;
};

/// Joint grid for two coordinates. `mass` is n1 x n2; column j of `cond_cdf`
/// (n2 x n1) is the CDF of x2 given x1 at grid point j, empty columns flagged.
struct Grid2D {
  double lo1 = 0.0, hi1 = 0.0, lo2 = 0.0, hi2 = 0.0;
  int n1 = 0, n2 = 0;
  Matrix mass;
  Matrix cond_cdf;
  std::vector<bool> empty_column;

  [[nodiscard]] double step1() const { return (hi1 - lo1) / static_cast<double>(n1 - 1); }
  [[nodiscard]] double step2() const { return (hi2 - lo2) / static_cast<double>(n2 - 1); }
};

inline constexpr double kGridHalfWidthSd = 8.0;
inline constexpr double kTailTolerance = 1e-6;

/// Density and CDF of a one-dimensional mixture on a grid of n_g points
/// spanning mean +- half_width_sd standard deviations. Component means are
/// linearly binned and the common Gaussian kernel applied by FFT convolution.
Grid1D build_grid_1d(const HomoskedasticGaussianMixture& mix, int n_g,
                     double half_width_sd = kGridHalfWidthSd);
Grid2D build_grid_2d(const HomoskedasticGaussianMixture& mix, int n1, int n2,
                     double half_width_sd = kGridHalfWidthSd);

/// Mixture mass outside [lo, hi] for a one-dimensional mixture.
double mixture_tail_mass(const HomoskedasticGaussianMixture& mix, double lo, double hi);

/// Multinomial component choice (binary search on cumulative weights) followed
/// by a draw from the chosen component. Indices come from `index_rng`, Gaussian
/// noise from `noise_rng`; a zero covariance adds exactly nothing.
Matrix sample_mixture_direct(const HomoskedasticGaussianMixture& mix, Eigen::Index n,
                             RngStream& index_rng, RngStream& noise_rng);
Swarm sample_mixture_direct(const HomoskedasticGaussianMixture& mix, Eigen::Index n, RngStream& rng);

/// Continuous draw of n points from a one-dimensional mixture: stratified
/// uniforms (i + u) / n with a single shared u pushed through the grid CDF.
/// The output is sorted. One uniform is consumed from `rng`.
Matrix resample_continuous_1d(const HomoskedasticGaussianMixture& mix, Eigen::Index n, int n_g,
                              RngStream& rng, ResampleDiagnostics* diagnostics = nullptr);
/// Continuous draw from a two-dimensional mixture: x1 from the marginal as in
/// the 1-d case, x2 by inversion of conditional CDFs interpolated between the
/// two grid columns adjacent to x1.
Matrix resample_continuous_2d(const HomoskedasticGaussianMixture& mix, Eigen::Index n, int n1,
                              int n2, RngStream& rng, ResampleDiagnostics* diagnostics = nullptr);

/// n indices drawn with probabilities proportional to `weights`.
/// Throws DomainError on a negative, non-finite or all-zero weight vector.
std::vector<Eigen::Index> multinomial_indices(const Vector& weights, Eigen::Index n, RngStream& rng);
/// Multinomial bootstrap of the columns of `locations`.
Swarm resample_multinomial(const Vector& weights, const Matrix& locations, Eigen::Index n,
                           RngStream& rng);

/// Quantile of the weighted empirical distribution of `values` (weights sum to one).
double weighted_quantile(const Vector& values, const Vector& weights, double p);

}  // namespace pspf

#endif  // PSPF_RESAMPLING_HPP
