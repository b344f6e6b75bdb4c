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

#include <cmath>

#include "pspf/error.hpp"
#include "pspf/kalman.hpp"
#include "pspf/model_zoo.hpp"
#include "pspf/ps_update.hpp"
#include "pspf/resampling.hpp"
#include "test_util.hpp"

namespace pspf {
namespace {

using test::normal_matrix;
using test::random_spd;

TEST(ShrinkageParams, Identities) {
  for (double b : {0.0, 0.25, 0.5, 1.0}) {
    const auto p = ShrinkageParams::from_b(b);
    EXPECT_NEAR(p.a, 1.0 - b, 1e-15);
    EXPECT_NEAR(p.g_prime, 1.0 - b * b, 1e-15);
  }
  EXPECT_NEAR(ShrinkageParams::from_b(0.5).bandwidth(), std::sqrt(3.0), 1e-14);
  EXPECT_THROW(ShrinkageParams::from_b(1.1), DomainError);
}

TEST(ShrunkKernel, GaussianLimit) {
  RngStream rng(1);
  const Swarm s(normal_matrix(2, 30, rng));
  const auto mix = shrunk_kernel(s, 0.0);
  const Moments m = swarm_moments(s);
  for (Eigen::Index i = 0; i < mix.size(); ++i) EXPECT_LT((mix.means.col(i) - m.mean).norm(), 1e-14);
  EXPECT_LT((mix.common_cov - m.cov).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(ShrunkKernel, PointMassLimit) {
  RngStream rng(2);
  const Swarm s(normal_matrix(2, 30, rng));
  const auto mix = shrunk_kernel(s, 1.0);
  EXPECT_LT((mix.means - s.particles()).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_TRUE(mix.common_cov.isZero(0.0));
  EXPECT_NEAR(mix.weights.sum(), 1.0, 1e-14);
}

TEST(ShrunkKernel, MomentIdentity) {
  RngStream rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const Swarm s(normal_matrix(2, 40, rng) * 3.0);
    const Moments m = swarm_moments(s);
    for (int k = 0; k <= 10; ++k) {
      const auto mm = shrunk_kernel(s, k / 10.0).moments();
      EXPECT_LT((mm.mean - m.mean).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_LT((mm.cov - m.cov).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
  EXPECT_THROW(shrunk_kernel(Swarm(normal_matrix(1, 5, rng)), -0.1), DomainError);
}

TEST(PsUpdate, SirLimit) {
  RngStream rng(4);
  const Matrix x = normal_matrix(2, 50, rng);
  const Matrix mm{{1.0, 0.5}};
  const Matrix r{{0.3}};
  const Vector y{{0.4}};
  const auto res = ps_update(Swarm(x), y, mm, r, 1.0);
  double p = 0.0;
  for (Eigen::Index i = 0; i < x.cols(); ++i) p += std::exp(gaussian_logpdf(y, mm * x.col(i), r));
  p /= static_cast<double>(x.cols());
  EXPECT_NEAR(res.p_y, p, 1e-12 * p);
  EXPECT_LT((res.posterior.means - x).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_NEAR(res.posterior.weights.sum(), 1.0, 1e-10);
}

TEST(PsUpdate, GaussianLimitIsKalmanUpdate) {
  RngStream rng(5);
  const Matrix x = normal_matrix(3, 60, rng);
  const Matrix mm = normal_matrix(2, 3, rng);
  const Matrix r = random_spd(2, rng);
  const Vector y = normal_matrix(2, 1, rng);
  const Moments m = swarm_moments(x);
  const auto res = ps_update(Swarm(x), y, mm, r, 0.0);
  const Matrix s = r + mm * m.cov * mm.transpose();
  EXPECT_NEAR(res.log_p_y, gaussian_logpdf(y, mm * m.mean, s), 1e-10);
  const Matrix k = m.cov * mm.transpose() * s.inverse();
  const Moments post = posterior_moments(res);
  EXPECT_LT((post.mean - (m.mean + k * (y - mm * m.mean))).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((post.cov - (m.cov - k * mm * m.cov)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((res.posterior.weights.array() - 1.0 / 60.0).abs().maxCoeff(), 1e-12);
}

TEST(PsUpdate, QuadratureOracleSmallSwarm) {
  const Matrix x{{-1.0, 0.0, 1.0}};
  const double b = 0.5, sig_e = 0.25, y = 0.5;
  const auto res = ps_update(Swarm(x), Vector{{y}}, Matrix{{1.0}}, Matrix{{sig_e}}, b);
  const auto prior = shrunk_kernel(Swarm(x), b);
  const double sd = std::sqrt(prior.common_cov(0, 0));
  const double q = test::trapezoid(
      [&](double v) { return std::exp(gaussian_logpdf_1d(y, v, sig_e) + prior.log_density(Vector{{v}})); },
      -1.0 - 10 * sd, 1.0 + 10 * sd, 20000);
  EXPECT_NEAR(res.p_y, q, 1e-8);
}

TEST(PsUpdate, SingularInnovationThrows) {
  const Matrix x = Matrix::Zero(1, 5);
  EXPECT_THROW(ps_update(Swarm(x), Vector{{0.0}}, Matrix{{1.0}}, Matrix{{-1.0}}, 0.5), SingularCovarianceError);
}

TEST(PsUpdate, UnderflowHandledInLogSpace) {
  RngStream rng(6);
  const Matrix x = normal_matrix(1, 100, rng);
  const auto res = ps_update(Swarm(x), Vector{{60.0}}, Matrix{{1.0}}, Matrix{{1e-4}}, 1.0);
  EXPECT_TRUE(std::isfinite(res.log_p_y));
  EXPECT_LT(res.log_p_y, -1000.0);
  EXPECT_NEAR(res.posterior.weights.sum(), 1.0, 1e-10);
}

TEST(PosteriorMoments, PointPrior) {
  const Matrix x = Vector{{0.7, -0.2}}.replicate(1, 10);
  const auto res = ps_update(Swarm(x), Vector{{3.0}}, Matrix{{1.0, 1.0}}, Matrix{{0.5}}, 0.4);
  const Moments m = posterior_moments(res);
  EXPECT_LT((m.mean - x.col(0)).norm(), 1e-12);
  EXPECT_LT(m.cov.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PosteriorMoments, SamplingOracle) {
  RngStream rng(7);
  const Matrix x = normal_matrix(2, 20, rng);
  const auto res = ps_update(Swarm(x), Vector{{0.8}}, Matrix{{1.0, -0.5}}, Matrix{{0.4}}, 0.6);
  const Moments m = posterior_moments(res);
  RngStream draw(8);
  const Eigen::Index n = 1000000;
  const Swarm s = sample_mixture_direct(res.posterior, n, draw);
  const Moments e = swarm_moments(s);
  for (int i = 0; i < 2; ++i) {
    EXPECT_NEAR(e.mean(i), m.mean(i), 4.0 * std::sqrt(m.cov(i, i) / n));
  }
  EXPECT_NEAR(e.cov(0, 0), m.cov(0, 0), 4.0 * m.cov(0, 0) * std::sqrt(2.0 / n) * 1.5);
}

TEST(AugmentModel, EvenSplitNoiseScales) {
  const auto aug = squared_obs_augmented();
  const auto& m = aug.model;
  EXPECT_EQ(m.dim_state, 2);
  EXPECT_NEAR(std::sqrt(m.obs_cov(0, 0)), std::sqrt(2.0) / 4.0, 1e-15);
  EXPECT_TRUE(m.has_linear_measurement());
  EXPECT_EQ(m.measurement_matrix, (Matrix{{0.0, 1.0}}));
  // Second coordinate carries h(x) + eta with eta of standard deviation sqrt(2)/4.
  RngStream rng(9);
  const int n = 200000;
  double s = 0.0, ss = 0.0;
  for (int i = 0; i < n; ++i) {
    Vector x{{1.0, 0.0}};
    m.transition(x, rng, 1);
    const double resid = x(1) - x(0) * x(0) / 20.0;
    s += resid;
    ss += resid * resid;
  }
  EXPECT_NEAR(s / n, 0.0, 4.0 * 0.36 / std::sqrt(n));
  EXPECT_NEAR(std::sqrt(ss / n), std::sqrt(2.0) / 4.0, 0.003);
}

TEST(AugmentModel, SmallSplitNoise) {
  const auto aug = augment_model(squared_obs_model(), 0.05);
  EXPECT_NEAR(aug.model.obs_cov(0, 0), (1.0 - 0.0025) * 0.25, 1e-15);
  EXPECT_THROW(augment_model(squared_obs_model(), 1.0), DomainError);
  EXPECT_THROW(augment_model(squared_obs_model(), 0.0), DomainError);
}

TEST(AugmentModel, LinearMeasurementSmallSplitMatchesKalman) {
  // Linear base model: exact likelihood of the augmented model stays available.
  const auto base = iid_variance_model(1.5);
  RngStream rng(10);
  const auto sim = simulate(base, 1, rng);
  const auto aug = augment_model(base, 1e-3);
  EXPECT_NEAR(kalman_mixture_loglik(aug.model, sim.observations), kalman_loglik(base, sim.observations), 1e-5);
}

}  // namespace
}  // namespace pspf
