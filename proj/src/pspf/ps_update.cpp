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

#include "pspf/ps_update.hpp"

#include <cmath>
#include <limits>
#include <span>

#include "pspf/error.hpp"

namespace pspf {

ShrinkageParams ShrinkageParams::from_b(double b) {
  if (!(b >= 0.0 && b <= 1.0)) throw DomainError("smoothing parameter b must lie in [0,1]");
  return ShrinkageParams{b, 1.0 - b, 1.0 - b * b};
}

double ShrinkageParams::bandwidth() const {
  if (b == 0.0) return std::numeric_limits<double>::infinity();
  return std::sqrt(1.0 / (b * b) - 1.0);
}

HomoskedasticGaussianMixture shrunk_kernel(const Swarm& swarm, double b) {
  return shrunk_kernel(swarm.particles(), swarm_moments(swarm), b);
}

HomoskedasticGaussianMixture shrunk_kernel(const Matrix& particles, const Moments& moments,
                                           double b) {
  const auto p = ShrinkageParams::from_b(b);
  const Eigen::Index n = particles.cols();
  HomoskedasticGaussianMixture mix;
  mix.weights = Vector::Constant(n, 1.0 / static_cast<double>(n));
  mix.means = (p.b * particles).colwise() + p.a * moments.mean;
  mix.common_cov = p.g_prime * moments.cov;
  return mix;
}

PsUpdateResult ps_update(const Swarm& swarm, const Vector& y, const Matrix& measurement,
                         const Matrix& obs_cov, double b) {
  return ps_update(swarm.particles(), swarm_moments(swarm), y, measurement, obs_cov, b);
}

PsUpdateResult ps_update(const Matrix& particles, const Moments& moments, const Vector& y,
                         const Matrix& measurement, const Matrix& obs_cov, double b) {
  const Eigen::Index n = particles.cols();
  const Eigen::Index dy = measurement.rows();
  if (measurement.cols() != particles.rows() || y.size() != dy || obs_cov.rows() != dy) {
    throw ShapeError("ps_update: dimension mismatch");
  }

  PsUpdateResult out;
  out.b = b;
  HomoskedasticGaussianMixture prior = shrunk_kernel(particles, moments, b);
  const Matrix& g = prior.common_cov;
  const Matrix mg = measurement * g;
  const Matrix s = symmetrize(obs_cov + mg * measurement.transpose());
  const Cholesky chol(s, "obs_cov + M G M'");

  // Residuals y - M m_i for all components at once.
  Matrix resid = (-(measurement * prior.means)).colwise() + y;
  out.log_raw_weights = residual_log_densities(chol, resid);

  const std::span<const double> lw(out.log_raw_weights.data(), static_cast<std::size_t>(n));
  const double lse = log_sum_exp(lw);
  if (!std::isfinite(lse)) throw SingularCovarianceError("ps_update: all component weights vanish");
  out.log_p_y = lse - std::log(static_cast<double>(n));
  out.p_y = std::exp(out.log_p_y);

  out.gain = chol.solve(mg).transpose();
  out.posterior.weights = (out.log_raw_weights.array() - lse).exp();
  out.posterior.means = prior.means + out.gain * resid;
  out.posterior.common_cov = symmetrize(g - out.gain * mg);
  return out;
}

Moments posterior_moments(const PsUpdateResult& result) { return result.posterior.moments(); }

AugmentedModel augment_model(const StateSpaceModel& base, double r) {
  if (!(r > 0.0 && r < 1.0)) throw DomainError("augment_model: split factor r must lie in (0,1)");
  base.validate();
  const int dx = base.dim_state;
  const int dy = base.dim_obs;
  const Matrix noise_factor = r * Matrix(Cholesky(base.obs_cov, "obs_cov").lower());

  StateSpaceModel::MeasurementFunction h = base.measurement_function;
  if (!h) {
    if (!base.measurement_by_time.empty()) {
      throw UnsupportedModelError("augment_model: time-varying measurement needs a measurement function");
    }
    const Matrix m = base.measurement_matrix;
    h = [m](const Eigen::Ref<const Vector>& x) -> Vector { return m * x; };
  }

  AugmentedModel aug;
  aug.r = r;
  aug.base_dim = dx;
  auto& mdl = aug.model;
  mdl.name = base.name + "/augmented";
  mdl.dim_state = dx + dy;
  mdl.dim_obs = dy;
  mdl.measurement_matrix = Matrix::Zero(dy, dx + dy);
  mdl.measurement_matrix.rightCols(dy).setIdentity();
  mdl.obs_cov = (1.0 - r * r) * base.obs_cov;
  mdl.markov_dims = base.carried_dims();
  mdl.state_floor = base.state_floor;

  auto append = [h, noise_factor, dx, dy](Eigen::Ref<Vector> state, RngStream& rng) {
    Vector z(dy);
    for (int k = 0; k < dy; ++k) z(k) = rng.normal();
    state.tail(dy) = h(state.head(dx)) + noise_factor * z;
  };
  const auto base_transition = base.transition;
  mdl.transition = [base_transition, append, dx](Eigen::Ref<Vector> state, RngStream& rng, int t) {
    Eigen::Ref<Vector> head = state.head(dx);
    base_transition(head, rng, t);
    append(state, rng);
  };
  const auto base_initial = base.initial_sampler;
  mdl.initial_sampler = [base_initial, append, dx](Eigen::Ref<Vector> state, RngStream& rng) {
    Eigen::Ref<Vector> head = state.head(dx);
    base_initial(head, rng);
    append(state, rng);
  };

  if (base.linear_dynamics && !base.measurement_function) {
    const Matrix& m = base.measurement_matrix;
    const auto& ld = *base.linear_dynamics;
    const Matrix eta_cov = r * r * base.obs_cov;
    LinearGaussianDynamics aug_dyn;
    aug_dyn.transition = Matrix::Zero(dx + dy, dx + dy);
    aug_dyn.transition.topLeftCorner(dx, dx) = ld.transition;
    aug_dyn.transition.bottomLeftCorner(dy, dx) = m * ld.transition;
    aug_dyn.offset.resize(dx + dy);
    aug_dyn.offset << ld.offset, m * ld.offset;
    aug_dyn.noise_cov.resize(dx + dy, dx + dy);
    aug_dyn.noise_cov << ld.noise_cov, ld.noise_cov * m.transpose(), m * ld.noise_cov,
        m * ld.noise_cov * m.transpose() + eta_cov;
    mdl.linear_dynamics = aug_dyn;
    if (base.initial_law) {
      GaussianMixtureLaw law;
      law.weights = base.initial_law->weights;
      for (std::size_t k = 0; k < base.initial_law->size(); ++k) {
        const Vector& m0 = base.initial_law->means[k];
        const Matrix& p0 = base.initial_law->covs[k];
        Vector mean(dx + dy);
        mean << m0, m * m0;
        Matrix cov(dx + dy, dx + dy);
        cov << p0, p0 * m.transpose(), m * p0, m * p0 * m.transpose() + eta_cov;
        law.means.push_back(mean);
        law.covs.push_back(cov);
      }
      mdl.initial_law = law;
    }
  }
  return aug;
}

}  // namespace pspf
