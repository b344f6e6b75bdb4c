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

#include "pspf/bandwidth.hpp"
#include "pspf/error.hpp"
#include "pspf/linalg.hpp"
#include "test_util.hpp"

namespace pspf {
namespace {

using test::normal_matrix;

double npdf(double y, double m, double v) { return std::exp(gaussian_logpdf_1d(y, m, v)); }

CriterionContext context_1d(double y, double mu, double var, Eigen::Index n, const BiasPilot& bp,
                            double m = 1.0, double r = 0.3) {
  return CriterionContext(Vector{{y}}, Matrix{{m}}, Matrix{{r}}, n, VariancePilot{Vector{{mu}}, Matrix{{var}}}, bp);
}

BiasPilot two_component_1d(double q1, double m1, double v1, double m2, double v2) {
  BiasPilot p;
  p.weights = {q1, 1.0 - q1};
  p.means = {Vector{{m1}}, Vector{{m2}}};
  p.covs = {Matrix{{v1}}, Matrix{{v2}}};
  return p;
}

BiasPilot as_variance_pilot(const Vector& mu, const Matrix& cov) {
  BiasPilot p;
  p.weights = {1.0, 0.0};
  p.means = {mu, mu};
  p.covs = {cov, cov};
  return p;
}

TEST(BiasPilot, SeparatedClusters) {
  RngStream rng(1);
  Matrix x(1, 4000);
  for (Eigen::Index i = 0; i < x.cols(); ++i) x(0, i) = (i % 2 == 0 ? -5.0 : 5.0) + rng.normal();
  RngStream em(2);
  const BiasPilot p = fit_bias_pilot(x, swarm_moments(x), EmOptions{}, em);
  const double lo = std::min(p.means[0](0), p.means[1](0));
  const double hi = std::max(p.means[0](0), p.means[1](0));
  EXPECT_NEAR(lo, -5.0, 0.5);
  EXPECT_NEAR(hi, 5.0, 0.5);
  EXPECT_NEAR(p.weights[0], 0.5, 0.1);
  EXPECT_NEAR(p.weights[0] + p.weights[1], 1.0, 1e-12);
}

TEST(BiasPilot, SingleGaussianDensityAtMean) {
  for (const EmInit init : {EmInit::kPrincipalAxis, EmInit::kRandomPair}) {
    RngStream rng(3);
    const Matrix x = normal_matrix(2, 5000, rng);
    RngStream em(4);
    EmOptions o;
    o.init = init;
    const BiasPilot p = fit_bias_pilot(x, swarm_moments(x), o, em);
    double dens = 0.0;
    for (int l = 0; l < 2; ++l) {
      if (p.weights[static_cast<std::size_t>(l)] > 0.0) {
        dens += p.weights[static_cast<std::size_t>(l)] *
                std::exp(gaussian_logpdf(Vector::Zero(2), p.means[static_cast<std::size_t>(l)],
                                         p.covs[static_cast<std::size_t>(l)]));
      }
    }
    const double truth = 1.0 / (2.0 * 3.141592653589793);
    EXPECT_NEAR(dens / truth, 1.0, 0.1);
  }
}

TEST(BiasPilot, RejectsZeroIterations) {
  RngStream rng(5);
  const Matrix x = normal_matrix(1, 50, rng);
  EmOptions o;
  o.iterations = 0;
  EXPECT_THROW(fit_bias_pilot(x, swarm_moments(x), o, rng), DomainError);
}

TEST(BiasPilot, DeterministicGivenSeed) {
  RngStream rng(6);
  const Matrix x = normal_matrix(2, 3000, rng);
  EmOptions o;
  o.init = EmInit::kRandomPair;
  RngStream a(7), b(7);
  const BiasPilot p = fit_bias_pilot(x, swarm_moments(x), o, a);
  const BiasPilot q = fit_bias_pilot(x, swarm_moments(x), o, b);
  EXPECT_EQ(p.means[0], q.means[0]);
  EXPECT_EQ(p.covs[1], q.covs[1]);
}

TEST(TableForms, F1AtBOne) {
  const auto ctx = context_1d(0.4, 0.1, 0.8, 100, two_component_1d(0.3, -1.0, 0.2, 1.0, 0.5));
  const Matrix s{{0.8}};
  EXPECT_NEAR(f1(1.0, s, ctx), npdf(0.4, 0.1, 0.3 + 0.8), 1e-14);
}

TEST(TableForms, F0WithVariancePilotEqualsF1) {
  const Vector mu{{0.2}};
  const Matrix cov{{0.7}};
  const auto ctx = context_1d(-0.5, 0.2, 0.7, 40, as_variance_pilot(mu, cov));
  for (double b : {0.0, 0.3, 0.8, 1.0}) {
    const Matrix st{{0.65}};
    EXPECT_NEAR(f0(b, st, ctx), f1(b, st, ctx), 1e-14);
    const double a = 1.0 - b;
    EXPECT_NEAR(f1(b, st, ctx), npdf(-0.5, 0.2, 0.3 + (b * b + a * a / 40.0) * 0.7 + (1 - b * b) * 0.65), 1e-14);
  }
}

TEST(PracticalBias, ZeroAtBOne) {
  RngStream rng(8);
  for (int rep = 0; rep < 20; ++rep) {
    const auto ctx = context_1d(rng.normal() * 3, rng.normal(), 0.5 + rng.uniform(), 200,
                                two_component_1d(rng.uniform(), rng.normal(), 0.3, rng.normal(), 0.6));
    EXPECT_LE(practical_bias_sq(1.0, ctx), 1e-18);
    EXPECT_EQ(ctx.evaluate(1.0).rho_v2(), 0.0);
  }
}

TEST(PracticalBias, GaussianPilotVanishesWithN) {
  const Vector mu{{0.3}};
  const Matrix cov{{0.9}};
  const double y = 1.1, r = 0.3;
  for (const Eigen::Index n : {Eigen::Index{10}, Eigen::Index{40}}) {
    const auto ctx = context_1d(y, 0.3, 0.9, n, as_variance_pilot(mu, cov));
    for (double b : {0.0, 0.5}) {
      const double a2n = (1 - b) * (1 - b) / static_cast<double>(n);
      const double expect = std::pow(npdf(y, 0.3, r + (1 + a2n) * 0.9) - npdf(y, 0.3, r + 0.9), 2);
      EXPECT_NEAR(practical_bias_sq(b, ctx), expect, 1e-10 * expect);
    }
  }
  const auto big = context_1d(y, 0.3, 0.9, Eigen::Index{1} << 50, as_variance_pilot(mu, cov));
  EXPECT_LT(practical_bias_sq(0.0, big), 1e-25);
}

TEST(PracticalBias, NonNegativeOnGrid) {
  const auto ctx = context_1d(0.9, -0.2, 1.3, 500, two_component_1d(0.4, -1.0, 0.4, 0.8, 0.7));
  for (int k = 0; k <= 100; ++k) EXPECT_GE(practical_bias_sq(k / 100.0, ctx), 0.0);
}

TEST(PracticalVariance, BZeroAndBOne) {
  const auto ctx = context_1d(0.9, -0.2, 1.3, 500, two_component_1d(0.4, -1.0, 0.4, 0.8, 0.7));
  const Matrix s{{1.3}};
  const CriterionTerms t0 = ctx.evaluate(0.0);
  const double v1 = f3(0.0, s, ctx) - std::pow(f1(0.0, s, ctx), 2) + (f2(0.0, s, ctx) - f3(0.0, s, ctx)) / 500.0;
  EXPECT_NEAR(t0.rho_v1(), v1, 1e-12 * std::abs(v1) + 1e-300);
  EXPECT_GT(t0.rho_v2(), 0.0);
  EXPECT_EQ(ctx.evaluate(1.0).rho_v2(), 0.0);
  EXPECT_NEAR(criterion(1.0, ctx), practical_variance(1.0, ctx), 1e-15);
}

TEST(PracticalVariance, MatchesFullSimulationOracle) {
  const Eigen::Index n = 50;
  const double mu = 0.1, var = 0.8, y = 0.7, r = 0.3;
  const auto ctx = context_1d(y, mu, var, n, as_variance_pilot(Vector{{mu}}, Matrix{{var}}), 1.0, r);
  RngStream rng(9);
  for (double b : {0.2, 0.6}) {
    const double a = 1 - b, g = 1 - b * b;
    const int reps = 100000;
    double s = 0.0, ss = 0.0;
    for (int k = 0; k < reps; ++k) {
      double chi = 0.0;
      for (Eigen::Index j = 0; j < n - 1; ++j) {
        const double z = rng.normal();
        chi += z * z;
      }
      const double st = var * chi / static_cast<double>(n);
      const double mt = mu + std::sqrt(var / static_cast<double>(n)) * rng.normal();
      double p = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double x = mu + std::sqrt(var) * rng.normal();
        p += npdf(y, a * mt + b * x, r + g * st);
      }
      p /= static_cast<double>(n);
      s += p;
      ss += p * p;
    }
    const double mc = ss / reps - (s / reps) * (s / reps);
    EXPECT_NEAR(practical_variance(b, ctx) / mc, 1.0, 0.3) << "b=" << b;
  }
}

TEST(Criterion, ContinuousUnderGridRefinement) {
  const auto ctx = context_1d(0.9, -0.2, 1.3, 500, two_component_1d(0.4, -1.0, 0.4, 0.8, 0.7));
  auto max_step = [&](int k) {
    double prev = criterion(0.0, ctx), worst = 0.0;
    for (int i = 1; i < k; ++i) {
      const double c = criterion(static_cast<double>(i) / (k - 1), ctx);
      EXPECT_TRUE(std::isfinite(c));
      worst = std::max(worst, std::abs(c - prev));
      prev = c;
    }
    return worst;
  };
  const double w1 = max_step(2001), w2 = max_step(4001);
  EXPECT_NEAR(w2 / w1, 0.5, 0.1);
}

TEST(Criterion, RhoV2DecreasesTowardOne) {
  const auto ctx = context_1d(0.9, -0.2, 1.3, 500, two_component_1d(0.4, -1.0, 0.4, 0.8, 0.7));
  double prev = ctx.evaluate(0.9).rho_v2();
  for (int k = 91; k <= 100; ++k) {
    const double v = ctx.evaluate(k / 100.0).rho_v2();
    EXPECT_LE(v, prev);
    prev = v;
  }
  EXPECT_EQ(prev, 0.0);
}

TEST(SelectBandwidth, TailObservationSmoothsMore) {
  RngStream rng(10);
  Matrix x = normal_matrix(1, 2000, rng);
  for (Eigen::Index i = 0; i < x.cols(); i += 3) x(0, i) += 2.5;  // skewed swarm
  const Moments m = swarm_moments(x);
  const Matrix mm{{1.0}}, r{{0.05}};
  RngStream a(11), b(11);
  const auto central = select_bandwidth(x, m, Vector{{m.mean(0)}}, mm, r, BandwidthOptions{}, a);
  const auto tail = select_bandwidth(x, m, Vector{{m.mean(0) + 6.0 * std::sqrt(m.cov(0, 0))}}, mm, r,
                                     BandwidthOptions{}, b);
  EXPECT_LT(tail.b, central.b);
}

TEST(SelectBandwidth, UninformativeObservationStaysInRange) {
  RngStream rng(12);
  const Matrix x = normal_matrix(1, 500, rng);
  RngStream e(13);
  const auto sel = select_bandwidth(Swarm(x), Vector{{0.3}}, Matrix{{1.0}}, Matrix{{1e8}}, BandwidthOptions{}, e);
  EXPECT_GE(sel.b, 0.0);
  EXPECT_LE(sel.b, 1.0);
  // Both variance terms cancel to round-off here; the criterion may be exactly zero.
  EXPECT_TRUE(std::isfinite(sel.terms.total()));
  EXPECT_GE(sel.terms.total(), 0.0);
}

TEST(SelectBandwidth, MatchesGridSearch) {
  RngStream rng(14);
  Matrix x = normal_matrix(1, 1000, rng);
  for (Eigen::Index i = 0; i < x.cols(); i += 4) x(0, i) = 2.0 + 0.3 * rng.normal();
  const Moments m = swarm_moments(x);
  const Vector y{{1.2}};
  const Matrix mm{{1.0}}, r{{0.02}};
  RngStream e1(15);
  const auto sel = select_bandwidth(x, m, y, mm, r, BandwidthOptions{}, e1);
  // Same pilot, exhaustive grid on the same criterion.
  const CriterionContext ctx(y, mm, r, x.cols(), VariancePilot{m.mean, m.cov}, sel.pilot);
  double best_b = 0.0, best = INFINITY;
  for (int k = 0; k <= 10000; ++k) {
    const double b = k / 10000.0;
    const double c = ctx.evaluate(b).log_total;
    if (c < best) {
      best = c;
      best_b = b;
    }
  }
  EXPECT_NEAR(sel.b, best_b, 2e-3);
  RngStream e2(15);
  EXPECT_EQ(select_bandwidth(x, m, y, mm, r, BandwidthOptions{}, e2).b, sel.b);
}

TEST(MiseBandwidth, GaussianReferenceRule) {
  const double h = mise_bandwidth(1, 10000);
  EXPECT_NEAR(h, std::pow(4.0 / 3.0, 0.2) * std::pow(10000.0, -0.2), 1e-15);
  EXPECT_NEAR(b_from_bandwidth(h), 1.0 / std::sqrt(1.0 + h * h), 1e-15);
}

}  // namespace
}  // namespace pspf
