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

#include "pspf/bandwidth.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <vector>

#include "pspf/error.hpp"
#include "pspf/optimize.hpp"
#include "pspf/ps_update.hpp"

namespace pspf {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_normal(const Vector& y, const Vector& mean, const Matrix& cov, const char* what) {
  if (cov.rows() == 1) {
    const double v = cov(0, 0);
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw SingularCovarianceError(std::string(what) + ": variance is not positive");
    }
    return gaussian_logpdf_1d(y(0), mean(0), v);
  }
  return Cholesky(cov, what).log_density(y, mean);
}

double log_det_spd(const Matrix& cov, const char* what) {
  if (cov.rows() == 1) {
    if (!(cov(0, 0) > 0.0)) throw SingularCovarianceError(std::string(what) + ": not positive");
    return std::log(cov(0, 0));
  }
  return Cholesky(cov, what).log_det();
}

// ---------------------------------------------------------------------------
// EM for the two-component bias pilot.

struct EmState {
  std::array<double, 2> q{0.5, 0.5};
  std::array<Vector, 2> mu;
  std::array<Matrix, 2> cov;
};

bool component_ok(const Matrix& cov, double scale) {
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) return false;
  const Matrix l = llt.matrixL();
  if (!l.allFinite()) return false;
  return l.diagonal().array().square().minCoeff() > 1e-12 * scale;
}

// M-step from responsibilities of component 0 (component 1 gets 1 - r).
void m_step(const Matrix& x, const Vector& r0, EmState& st, std::array<double, 2>& counts) {
  const auto m = static_cast<double>(x.cols());
  for (int l = 0; l < 2; ++l) {
    const Vector r = l == 0 ? r0 : Vector((1.0 - r0.array()).matrix());
    const double nl = r.sum();
    counts[static_cast<std::size_t>(l)] = nl;
    st.q[static_cast<std::size_t>(l)] = nl / m;
    if (nl <= 0.0) continue;
    st.mu[static_cast<std::size_t>(l)] = x * r / nl;
    const Matrix c = x.colwise() - st.mu[static_cast<std::size_t>(l)];
    st.cov[static_cast<std::size_t>(l)] = symmetrize(c * r.asDiagonal() * c.transpose() / nl);
  }
}

Vector e_step(const Matrix& x, const EmState& st) {
  const Eigen::Index m = x.cols();
  const auto d = static_cast<double>(x.rows());
  std::array<Vector, 2> logp;
  for (std::size_t l = 0; l < 2; ++l) {
    if (st.q[l] <= 0.0) {
      logp[l] = Vector::Constant(m, kNegInf);
      continue;
    }
    const Cholesky chol(st.cov[l], "EM component covariance");
    const Matrix z = chol.lower().triangularView<Eigen::Lower>().solve(
        Matrix(x.colwise() - st.mu[l]));
    logp[l] = (std::log(st.q[l]) - 0.5 * (d * kLog2Pi + chol.log_det())) -
              0.5 * z.colwise().squaredNorm().transpose().array();
  }
  Vector r0(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double diff = logp[1](i) - logp[0](i);
    r0(i) = std::isnan(diff) ? 0.5 : 1.0 / (1.0 + std::exp(diff));
  }
  return r0;
}

BiasPilot fallback_pilot(const Moments& mom, int reinit) {
  BiasPilot p;
  p.weights = {1.0, 0.0};
  p.means = {mom.mean, mom.mean};
  p.covs = {mom.cov, mom.cov};
  p.fallback = true;
  p.reinitializations = reinit;
  return p;
}

}  // namespace

BiasPilot fit_bias_pilot(const Matrix& particles, const Moments& mom, const EmOptions& options,
                         RngStream& rng) {
  if (options.iterations < 1) throw DomainError("fit_bias_pilot: em_iters must be at least 1");
  const Eigen::Index n = particles.cols();
  if (n < 4) throw InsufficientSampleError("fit_bias_pilot needs at least 4 particles");
  const Eigen::Index dim = particles.rows();

  Matrix sub;
  const Matrix* xp = &particles;
  if (options.subsample && *options.subsample < n) {
    const Eigen::Index m = std::max<Eigen::Index>(*options.subsample, 4);
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto j = i + static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n - i)));
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    std::sort(idx.begin(), idx.begin() + m);
    sub.resize(dim, m);
    for (Eigen::Index i = 0; i < m; ++i) sub.col(i) = particles.col(idx[static_cast<std::size_t>(i)]);
    xp = &sub;
  }
  const Matrix& x = *xp;
  const Eigen::Index m = x.cols();
  const double scale = std::max(mom.cov.trace() / static_cast<double>(dim), 0.0);
  if (!(scale > 0.0)) return fallback_pilot(mom, 0);

  EmState st;
  std::array<double, 2> counts{};
  if (options.init == EmInit::kPrincipalAxis) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(mom.cov);
    const Eigen::Index top = dim - 1;
    const double lambda = es.eigenvalues()(top);
    if (!(lambda > 0.0)) return fallback_pilot(mom, 0);
    Vector axis = es.eigenvectors().col(top);
    // Fix the sign so the split does not depend on the eigen solver's convention.
    Eigen::Index big = 0;
    axis.cwiseAbs().maxCoeff(&big);
    if (axis(big) < 0.0) axis = -axis;
    const Vector z = (axis.transpose() * (x.colwise() - mom.mean)).transpose() / std::sqrt(lambda);
    const Vector r0 = (1.0 / (1.0 + (2.0 * z.array()).exp())).matrix();
    m_step(x, r0, st, counts);
  } else {
    const auto i0 = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(m)));
    Vector d2 = (x.colwise() - x.col(i0)).colwise().squaredNorm().transpose();
    const double total = d2.sum();
    Eigen::Index i1 = (i0 + 1) % m;
    if (total > 0.0) {
      const double u = rng.uniform() * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < m; ++i) {
        acc += d2(i);
        if (acc >= u) {
          i1 = i;
          break;
        }
      }
    }
    st.mu = {x.col(i0), x.col(i1)};
    st.cov = {mom.cov, mom.cov};
    st.q = {0.5, 0.5};
  }

  int reinit = 0;
  auto repair = [&]() -> bool {
    for (std::size_t l = 0; l < 2; ++l) {
      const bool bad = !(counts[l] > 1e-8 * static_cast<double>(m)) || st.mu[l].size() != dim ||
                       !component_ok(st.cov[l], scale);
      if (!bad) continue;
      if (++reinit > 1) return false;
      st.mu[l] = mom.mean;
      st.cov[l] = 2.0 * mom.cov;
      st.q = {0.5, 0.5};
      counts = {0.5 * static_cast<double>(m), 0.5 * static_cast<double>(m)};
    }
    return true;
  };
  if (options.init == EmInit::kPrincipalAxis && !repair()) return fallback_pilot(mom, reinit);

  for (int it = 0; it < options.iterations; ++it) {
    Vector r0;
    try {
      r0 = e_step(x, st);
    } catch (const SingularCovarianceError&) {
      return fallback_pilot(mom, reinit + 1);
    }
    m_step(x, r0, st, counts);
    if (!repair()) return fallback_pilot(mom, reinit);
  }

  BiasPilot p;
  p.weights = st.q;
  const double qs = p.weights[0] + p.weights[1];
  p.weights[0] /= qs;
  p.weights[1] = 1.0 - p.weights[0];
  p.means = st.mu;
  p.covs = st.cov;
  p.reinitializations = reinit;
  return p;
}

BiasPilot fit_bias_pilot(const Swarm& swarm, int em_iters, std::optional<int> subsample,
                         RngStream& rng) {
  EmOptions opt;
  opt.iterations = em_iters;
  opt.subsample = subsample;
  return fit_bias_pilot(swarm.particles(), swarm_moments(swarm), opt, rng);
}

// ---------------------------------------------------------------------------

CriterionContext::CriterionContext(Vector y, Matrix measurement, Matrix obs_cov, Eigen::Index n,
                                   VariancePilot variance_pilot, BiasPilot bias_pilot)
    : y_(std::move(y)),
      m_(std::move(measurement)),
      obs_cov_(std::move(obs_cov)),
      n_(n),
      vpilot_(std::move(variance_pilot)),
      bpilot_(std::move(bias_pilot)) {
  if (n_ < 1) throw InsufficientSampleError("CriterionContext: n must be positive");
  if (m_.rows() != y_.size() || m_.cols() != vpilot_.mean.size() || obs_cov_.rows() != y_.size()) {
    throw ShapeError("CriterionContext: dimension mismatch");
  }
  m_mean_ = m_ * vpilot_.mean;
  msm_ = symmetrize(m_ * vpilot_.cov * m_.transpose());
  for (std::size_t l = 0; l < 2; ++l) {
    if (bpilot_.means[l].size() == 0) {
      bpilot_.means[l] = vpilot_.mean;
      bpilot_.covs[l] = vpilot_.cov;
    }
    m_bias_mean_[l] = m_ * bpilot_.means[l];
    msm_bias_[l] = symmetrize(m_ * bpilot_.covs[l] * m_.transpose());
  }
  log_rho_b_ = log_f0_impl(1.0, msm_);
}

double CriterionContext::log_f0_impl(double b, const Matrix& msm_tilde) const {
  const auto p = ShrinkageParams::from_b(b);
  const double inv_n = 1.0 / static_cast<double>(n_);
  double out = kNegInf;
  for (std::size_t l = 0; l < 2; ++l) {
    const double q = bpilot_.weights[l];
    if (q <= 0.0) continue;
    const Vector mean = p.a * m_mean_ + p.b * m_bias_mean_[l];
    const Matrix v = obs_cov_ + p.b * p.b * msm_bias_[l] + (p.a * p.a * inv_n) * msm_ +
                     p.g_prime * msm_tilde;
    out = log_add_exp(out, std::log(q) + log_normal(y_, mean, v, "f0 covariance v_l"));
  }
  return out;
}

double CriterionContext::log_f1_impl(double b, const Matrix& msm_tilde) const {
  const auto p = ShrinkageParams::from_b(b);
  const double inv_n = 1.0 / static_cast<double>(n_);
  const Matrix v = obs_cov_ + (p.b * p.b + p.a * p.a * inv_n) * msm_ + p.g_prime * msm_tilde;
  return log_normal(y_, m_mean_, v, "f1 covariance");
}

double CriterionContext::log_f2_impl(double b, const Matrix& msm_tilde) const {
  const auto p = ShrinkageParams::from_b(b);
  const double inv_n = 1.0 / static_cast<double>(n_);
  const auto dy = static_cast<double>(y_.size());
  const Matrix v = 0.5 * obs_cov_ + (p.b * p.b + p.a * p.a * inv_n) * msm_ +
                   (0.5 * p.g_prime) * msm_tilde;
  const Matrix s = obs_cov_ + p.g_prime * msm_tilde;
  return log_normal(y_, m_mean_, v, "f2 covariance") - 0.5 * dy * std::log(4.0 * std::numbers::pi) -
         0.5 * log_det_spd(s, "f2 normaliser");
}

double CriterionContext::log_f3_impl(double b, const Matrix& msm_tilde) const {
  const auto p = ShrinkageParams::from_b(b);
  const double inv_n = 1.0 / static_cast<double>(n_);
  const auto dy = static_cast<double>(y_.size());
  const Matrix v = 0.5 * obs_cov_ + (0.5 * p.b * p.b + p.a * p.a * inv_n) * msm_ +
                   (0.5 * p.g_prime) * msm_tilde;
  const Matrix s = obs_cov_ + p.b * p.b * msm_ + p.g_prime * msm_tilde;
  return log_normal(y_, m_mean_, v, "f3 covariance") - 0.5 * dy * std::log(4.0 * std::numbers::pi) -
         0.5 * log_det_spd(s, "f3 normaliser");
}

namespace {
Matrix project(const Matrix& m, const Matrix& sigma) { return symmetrize(m * sigma * m.transpose()); }
}  // namespace

double CriterionContext::log_f0(double b, const Matrix& st) const { return log_f0_impl(b, project(m_, st)); }
double CriterionContext::log_f1(double b, const Matrix& st) const { return log_f1_impl(b, project(m_, st)); }
double CriterionContext::log_f2(double b, const Matrix& st) const { return log_f2_impl(b, project(m_, st)); }
double CriterionContext::log_f3(double b, const Matrix& st) const { return log_f3_impl(b, project(m_, st)); }

Matrix CriterionContext::f1_breve(double b) const {
  const auto p = ShrinkageParams::from_b(b);
  const Matrix f = obs_cov_ + (1.0 + p.a * p.a / static_cast<double>(n_)) * msm_;
  const Cholesky chol(f, "F");
  const Vector ybar = y_ - m_mean_;
  const Vector u = m_.transpose() * chol.solve(ybar);
  return u * u.transpose() - m_.transpose() * chol.solve(m_);
}

CriterionTerms CriterionContext::evaluate(double b) const {
  const auto p = ShrinkageParams::from_b(b);
  CriterionTerms t;
  t.b = b;
  t.log_rho_b = log_rho_b_;
  t.log_rho_b_hat = log_f0_impl(b, msm_);
  const double hi = std::max(t.log_rho_b_hat, t.log_rho_b);
  const double lo = std::min(t.log_rho_b_hat, t.log_rho_b);
  t.log_bias_sq = 2.0 * log_sub_exp(hi, lo);

  const double lf1 = log_f1_impl(b, msm_);
  const double lf2 = log_f2_impl(b, msm_);
  const double lf3 = log_f3_impl(b, msm_);
  const double log_n = std::log(static_cast<double>(n_));
  t.log_rho_v1 = log_add_exp(log_sub_exp(lf3, 2.0 * lf1), log_sub_exp(lf2, lf3) - log_n);

  t.log_rho_v2 = kNegInf;
  if (p.g_prime > 0.0) {
    const Matrix fs = f1_breve(b) * vpilot_.cov;
    const double tr = (fs * fs).trace();
    if (tr > 0.0) {
      t.log_rho_v2 = 2.0 * lf1 + 2.0 * std::log(p.g_prime) + std::log(tr) - std::log(2.0) - log_n;
    }
  }
  t.log_variance = log_add_exp(t.log_rho_v1, t.log_rho_v2);
  t.log_total = log_add_exp(t.log_bias_sq, t.log_variance);
  return t;
}

double f0(double b, const Matrix& st, const CriterionContext& ctx) { return std::exp(ctx.log_f0(b, st)); }
double f1(double b, const Matrix& st, const CriterionContext& ctx) { return std::exp(ctx.log_f1(b, st)); }
double f2(double b, const Matrix& st, const CriterionContext& ctx) { return std::exp(ctx.log_f2(b, st)); }
double f3(double b, const Matrix& st, const CriterionContext& ctx) { return std::exp(ctx.log_f3(b, st)); }

double practical_bias_sq(double b, const CriterionContext& ctx) { return ctx.evaluate(b).bias_sq(); }
double practical_variance(double b, const CriterionContext& ctx) { return ctx.evaluate(b).variance(); }
double criterion(double b, const CriterionContext& ctx) { return ctx.evaluate(b).total(); }

BandwidthSelection select_bandwidth(const Matrix& particles, const Moments& moments,
                                    const Vector& y, const Matrix& measurement,
                                    const Matrix& obs_cov, const BandwidthOptions& options,
                                    RngStream& rng) {
  if (particles.cols() < 4) throw InsufficientSampleError("select_bandwidth needs at least 4 particles");
  BandwidthSelection sel;
  sel.pilot = fit_bias_pilot(particles, moments, options.em, rng);
  const CriterionContext ctx(y, measurement, obs_cov, particles.cols(),
                             VariancePilot{moments.mean, moments.cov}, sel.pilot);
  int evals = 0;
  auto objective = [&](double b) {
    ++evals;
    return ctx.evaluate(b).log_total;
  };
  const ScalarMinimum best = minimize_bounded(objective, 0.0, 1.0, options.tolerance,
                                              options.max_evaluations);
  double b = best.x;
  double value = best.value;
  if (options.check_boundaries) {
    for (double edge : {0.0, 1.0}) {
      const double v = objective(edge);
      if (v < value) {
        value = v;
        b = edge;
      }
    }
  }
  sel.b = b;
  sel.terms = ctx.evaluate(b);
  sel.evaluations = evals;
  return sel;
}

BandwidthSelection select_bandwidth(const Swarm& swarm, const Vector& y, const Matrix& measurement,
                                    const Matrix& obs_cov, const BandwidthOptions& options,
                                    RngStream& rng) {
  return select_bandwidth(swarm.particles(), swarm_moments(swarm), y, measurement, obs_cov, options,
                          rng);
}

double mise_bandwidth(int dim, Eigen::Index n, double constant_scale) {
  const double d = dim;
  return constant_scale * std::pow(4.0 / (d + 2.0), 1.0 / (d + 4.0)) *
         std::pow(static_cast<double>(n), -1.0 / (d + 4.0));
}

double b_from_bandwidth(double h) { return 1.0 / std::sqrt(1.0 + h * h); }

}  // namespace pspf
