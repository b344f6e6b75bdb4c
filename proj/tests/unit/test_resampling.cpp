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


#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "pspf/error.hpp"
#include "pspf/ps_update.hpp"
#include "pspf/resampling.hpp"
#include "test_util.hpp"

namespace pspf {
namespace {

using test::normal_cdf;
using test::normal_matrix;

HomoskedasticGaussianMixture mix_1d(std::vector<double> w, std::vector<double> m, double var) {
  HomoskedasticGaussianMixture mix;
  mix.weights = Eigen::Map<Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
  mix.means = Eigen::Map<Matrix>(m.data(), 1, static_cast<Eigen::Index>(m.size()));
  mix.common_cov = Matrix{{var}};
  return mix;
}

double ks_statistic(Vector sample, const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (Eigen::Index i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample(i));
    d = std::max({d, std::abs(f - static_cast<double>(i) / n), std::abs(static_cast<double>(i + 1) / n - f)});
  }
  return d;
}

TEST(DirectSampling, SingleComponentMoments) {
  HomoskedasticGaussianMixture mix;
  mix.weights = Vector::Ones(1);
  mix.means = Matrix{{1.0}, {-2.0}};
  mix.common_cov = Matrix{{2.0, 0.6}, {0.6, 1.0}};
  RngStream rng(1);
  const Eigen::Index n = 100000;
  const Matrix x = sample_mixture_direct(mix, n, rng).particles();
  const Moments m = swarm_moments(x);
  for (int k = 0; k < 2; ++k) {
    EXPECT_NEAR(m.mean(k), mix.means(k, 0), 4.0 * std::sqrt(mix.common_cov(k, k) / n));
    EXPECT_NEAR(m.cov(k, k), mix.common_cov(k, k), 4.0 * mix.common_cov(k, k) * std::sqrt(2.0 / n));
  }
  EXPECT_NEAR(m.cov(0, 1), 0.6, 4.0 * std::sqrt((2.0 + 0.36) / n));
}

TEST(DirectSampling, ComponentOccupancy) {
  const auto mix = mix_1d({0.5, 0.5}, {-10.0, 10.0}, 1.0);
  RngStream rng(2);
  const Eigen::Index n = 40000;
  const Matrix x = sample_mixture_direct(mix, n, rng).particles();
  const double frac = static_cast<double>((x.array() > 0.0).count()) / n;
  EXPECT_NEAR(frac, 0.5, 4.0 * std::sqrt(0.25 / n));
}

TEST(DirectSampling, PointComponentsBootstrap) {
  RngStream rng(3);
  const Matrix locs = normal_matrix(1, 20, rng);
  const auto post = ps_update(Swarm(locs), Vector{{0.5}}, Matrix{{1.0}}, Matrix{{0.4}}, 1.0);
  RngStream s(4);
  const Matrix x = sample_mixture_direct(post.posterior, 500, s).particles();
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    EXPECT_LT((locs.array() - x(0, i)).abs().minCoeff(), 1e-15);
  }
}

TEST(Continuous1d, KolmogorovSmirnovStandardNormal) {
  const auto mix = mix_1d({1.0}, {0.0}, 1.0);
  RngStream rng(5);
  const Eigen::Index n = 100000;
  const Matrix x = resample_continuous_1d(mix, n, 1024, rng);
  const double d = ks_statistic(x.row(0).transpose(), normal_cdf);
  EXPECT_LT(d, 2.0 * 1.36 / std::sqrt(static_cast<double>(n)));
}

TEST(Continuous1d, SortedAndDeterministic) {
  const auto mix = mix_1d({0.2, 0.5, 0.3}, {-1.0, 0.5, 2.0}, 0.3);
  RngStream a(6), b(6);
  const Matrix x = resample_continuous_1d(mix, 5000, 512, a);
  const Matrix y = resample_continuous_1d(mix, 5000, 512, b);
  EXPECT_EQ(x, y);
  EXPECT_TRUE(std::is_sorted(x.data(), x.data() + x.size()));
}

TEST(Continuous1d, LipschitzInMixtureMeans) {
  const auto base = mix_1d({0.2, 0.5, 0.3}, {-1.0, 0.5, 2.0}, 0.3);
  RngStream r0(7);
  const Matrix x0 = resample_continuous_1d(base, 5000, 1024, r0);
  std::vector<double> ratio;
  for (double eps : {1e-4, 1e-5, 1e-6}) {
    auto shifted = base;
    shifted.means.array() += eps;
    RngStream r1(7);
    const Matrix x1 = resample_continuous_1d(shifted, 5000, 1024, r1);
    const double disp = (x1 - x0).cwiseAbs().maxCoeff();
    EXPECT_LT(disp, 10.0 * eps) << eps;
    ratio.push_back(disp / eps);
  }
  // Displacement scales linearly across three decades.
  EXPECT_NEAR(ratio[1] / ratio[0], 1.0, 0.2);
  EXPECT_NEAR(ratio[2] / ratio[0], 1.0, 0.2);
}

TEST(Continuous1d, GridRefinementImprovesFit) {
  const auto mix = mix_1d({0.5, 0.5}, {-2.0, 2.5}, 0.05);
  auto cdf = [&](double v) { return mix.cdf_1d(v); };
  double prev = INFINITY;
  for (int ng : {64, 128, 256}) {
    RngStream rng(8);
    const Matrix x = resample_continuous_1d(mix, 200000, ng, rng);
    const double d = ks_statistic(x.row(0).transpose(), cdf);
    EXPECT_LT(d, prev) << ng;
    prev = d;
  }
}

TEST(Continuous1d, GridInvariants) {
  const auto mix = mix_1d({0.3, 0.7}, {-1.0, 1.0}, 0.2);
  const Grid1D g = build_grid_1d(mix, 512);
  const Moments m = mix.moments();
  const double sd = std::sqrt(m.cov(0, 0));
  EXPECT_NEAR(g.lo, m.mean(0) - 8.0 * sd, 1e-12);
  EXPECT_NEAR(g.hi, m.mean(0) + 8.0 * sd, 1e-12);
  EXPECT_EQ(g.cdf(g.n_g - 1), 1.0);
  for (int j = 1; j < g.n_g; ++j) EXPECT_GE(g.cdf(j), g.cdf(j - 1));
  EXPECT_GE(g.values.minCoeff(), -1e-12);
}

TEST(Continuous1d, TailMassWidensGrid) {
  // A far-away light component puts mass outside mean +- 8 sd.
  const auto mix = mix_1d({0.999, 0.001}, {0.0, 200.0}, 1e-4);
  ResampleDiagnostics diag;
  RngStream rng(9);
  const Matrix x = resample_continuous_1d(mix, 1000, 1024, rng, &diag);
  EXPECT_TRUE(diag.widened || diag.tail_mass <= kTailTolerance);
  EXPECT_TRUE(x.allFinite());
}

TEST(Continuous1d, PreservesMoments) {
  RngStream gen(10);
  for (int rep = 0; rep < 5; ++rep) {
    const auto mix = mix_1d({0.3, 0.3, 0.4}, {gen.normal(), gen.normal(), 3 * gen.normal()}, 0.2 + gen.uniform());
    const Moments m = mix.moments();
    RngStream rng(11 + rep);
    const Eigen::Index n = 100000;
    const Moments s = swarm_moments(resample_continuous_1d(mix, n, 1024, rng));
    const double v = m.cov(0, 0);
    EXPECT_NEAR(s.mean(0), m.mean(0), 4.0 * std::sqrt(v / n));
    EXPECT_NEAR(s.cov(0, 0), v, 4.0 * v * std::sqrt(3.0 / n));
  }
}

TEST(Continuous2d, ProbePointCdf) {
  HomoskedasticGaussianMixture mix;
  mix.weights = Vector::Ones(1);
  mix.means = Matrix::Zero(2, 1);
  mix.common_cov = Matrix::Identity(2, 2);
  RngStream rng(12);
  const Eigen::Index n = 100000;
  const Matrix x = resample_continuous_2d(mix, n, 256, 256, rng);
  for (double p1 : {-1.5, -0.5, 0.0, 0.7, 1.6}) {
    for (double p2 : {-1.2, -0.3, 0.1, 0.9, 2.0}) {
      const double truth = normal_cdf(p1) * normal_cdf(p2);
      const double emp = static_cast<double>(((x.row(0).array() <= p1) && (x.row(1).array() <= p2)).count()) / n;
      EXPECT_NEAR(emp, truth, 4.0 * std::sqrt(truth * (1 - truth) / n)) << p1 << "," << p2;
    }
  }
}

TEST(Continuous2d, DiagonalMixtureCorrelation) {
  HomoskedasticGaussianMixture mix;
  mix.weights = Vector::Constant(2, 0.5);
  mix.means = Matrix{{-1.0, 1.0}, {-1.0, 1.0}};
  mix.common_cov = 0.05 * Matrix::Identity(2, 2);
  const Moments m = mix.moments();
  const double rho = m.cov(0, 1) / std::sqrt(m.cov(0, 0) * m.cov(1, 1));
  RngStream rng(13);
  const Moments s = swarm_moments(resample_continuous_2d(mix, 100000, 256, 256, rng));
  EXPECT_NEAR(s.cov(0, 1) / std::sqrt(s.cov(0, 0) * s.cov(1, 1)), rho, 0.05);
  EXPECT_NEAR(s.mean(0), 0.0, 0.02);
}

TEST(Continuous2d, DeterministicAndGridInvariants) {
  HomoskedasticGaussianMixture mix;
  mix.weights = Vector::Constant(2, 0.5);
  mix.means = Matrix{{-1.0, 1.0}, {0.5, 1.0}};
  mix.common_cov = Matrix{{0.3, 0.1}, {0.1, 0.2}};
  RngStream a(14), b(14);
  EXPECT_EQ(resample_continuous_2d(mix, 3000, 128, 128, a), resample_continuous_2d(mix, 3000, 128, 128, b));
  const Grid2D g = build_grid_2d(mix, 128, 128);
  EXPECT_GE(g.mass.minCoeff(), -1e-12);
  for (int j = 0; j < g.n1; ++j) {
    if (g.empty_column[static_cast<std::size_t>(j)]) continue;
    for (int i = 1; i < g.n2; ++i) EXPECT_GE(g.cond_cdf(i, j), g.cond_cdf(i - 1, j));
  }
}

TEST(Multinomial, DegenerateWeights) {
  RngStream rng(15);
  const Matrix locs = normal_matrix(2, 5, rng);
  Vector w = Vector::Zero(5);
  w(3) = 1.0;
  const Swarm s = resample_multinomial(w, locs, 100, rng);
  for (Eigen::Index i = 0; i < 100; ++i) EXPECT_EQ(s.particle(i), locs.col(3));
}

TEST(Multinomial, UniformWeightsChiSquare) {
  const Eigen::Index k = 50, n = 50000;
  RngStream rng(16);
  const auto idx = multinomial_indices(Vector::Constant(k, 1.0 / k), n, rng);
  std::vector<double> counts(static_cast<std::size_t>(k), 0.0);
  for (auto i : idx) counts[static_cast<std::size_t>(i)] += 1.0;
  const double e = static_cast<double>(n) / k;
  double chi = 0.0;
  for (double c : counts) chi += (c - e) * (c - e) / e;
  // chi-square with k-1 dof: mean k-1, sd sqrt(2(k-1)).
  EXPECT_LT(std::abs(chi - (k - 1)), 4.0 * std::sqrt(2.0 * (k - 1)));
}

TEST(Multinomial, ProportionalCounts) {
  const Eigen::Index n = 60000;
  RngStream rng(17);
  const auto idx = multinomial_indices(Vector{{1.0, 2.0, 3.0}} / 6.0, n, rng);
  for (int j = 0; j < 3; ++j) {
    const double p = (j + 1) / 6.0;
    const double c = static_cast<double>(std::count(idx.begin(), idx.end(), j));
    EXPECT_NEAR(c / n, p, 4.0 * std::sqrt(p * (1 - p) / n));
  }
}

TEST(Multinomial, RejectsBadWeights) {
  RngStream rng(18);
  EXPECT_THROW(multinomial_indices(Vector{{0.5, -0.1, 0.6}}, 10, rng), DomainError);
  EXPECT_THROW(multinomial_indices(Vector::Zero(3), 10, rng), DomainError);
}

TEST(WeightedQuantile, MatchesSortedSample) {
  const Vector v{{3.0, 1.0, 2.0, 4.0}};
  const Vector w = Vector::Constant(4, 0.25);
  EXPECT_NEAR(weighted_quantile(v, w, 0.5), 2.0, 1e-12);
  EXPECT_NEAR(weighted_quantile(v, w, 0.99), 4.0, 1e-12);
}

}  // namespace
}  // namespace pspf
