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

#include "pspf/model_zoo.hpp"

#include <cmath>
#include <memory>

#include "pspf/error.hpp"
#include "pspf/kalman.hpp"

namespace pspf {

namespace {

// Cholesky factors of the law's component covariances, computed once.
struct LawSampler {
  GaussianMixtureLaw law;
  std::vector<Matrix> factors;

  explicit LawSampler(GaussianMixtureLaw l) : law(std::move(l)) {
    for (const auto& c : law.covs) factors.push_back(psd_factor(c));
  }
  void operator()(Eigen::Ref<Vector> out, RngStream& rng) const {
    std::size_t k = 0;
    if (law.size() > 1) {
      const double u = rng.uniform();
      double acc = 0.0;
      for (k = 0; k + 1 < law.size(); ++k) {
        acc += law.weights[k];
        if (u < acc) break;
      }
    }
    Vector z(out.size());
    for (Eigen::Index r = 0; r < z.size(); ++r) z(r) = rng.normal();
    out = law.means[k] + factors[k] * z;
  }
};

StateSpaceModel::InitialSampler law_sampler(const GaussianMixtureLaw& law) {
  auto s = std::make_shared<LawSampler>(law);
  return [s](Eigen::Ref<Vector> out, RngStream& rng) { (*s)(out, rng); };
}

StateSpaceModel::Transition linear_transition(const LinearGaussianDynamics& dyn) {
  auto a = std::make_shared<Matrix>(dyn.transition);
  auto c = std::make_shared<Vector>(dyn.offset);
  auto l = std::make_shared<Matrix>(psd_factor(dyn.noise_cov));
  return [a, c, l](Eigen::Ref<Vector> x, RngStream& rng, int) {
    Vector z(x.size());
    for (Eigen::Index r = 0; r < z.size(); ++r) z(r) = rng.normal();
    const Vector next = (*a) * x + *c + (*l) * z;
    x = next;
  };
}

}  // namespace

void sample_law(const GaussianMixtureLaw& law, Eigen::Ref<Vector> out, RngStream& rng) {
  const LawSampler sampler(law);
  sampler(out, rng);
}

StateSpaceModel linear_mixture_model(int dim, double xi) {
  if (dim < 1) throw ValidationError("linear_mixture_model: dimension must be positive");
  if (!(xi >= 0.0)) throw ValidationError("linear_mixture_model: xi must be non-negative");
  StateSpaceModel m;
  m.name = "linear_mixture";
  m.dim_state = dim;
  m.dim_obs = dim;
  LinearGaussianDynamics dyn;
  dyn.transition = 0.95 * Matrix::Identity(dim, dim);
  dyn.offset = Vector::Zero(dim);
  dyn.noise_cov = 0.1 * Matrix::Ones(dim, dim) + 0.2 * Matrix::Identity(dim, dim);
  m.linear_dynamics = dyn;
  m.transition = linear_transition(dyn);
  m.measurement_matrix = Matrix::Identity(dim, dim);
  m.obs_cov = xi * xi * Matrix::Identity(dim, dim);

  GaussianMixtureLaw law;
  Vector alt(dim);
  for (int k = 0; k < dim; ++k) alt(k) = k % 2 == 0 ? -1.0 : 1.0;
  law.weights = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  law.means = {Vector::Zero(dim), Vector::Ones(dim), alt};
  law.covs.assign(3, Matrix::Identity(dim, dim));
  m.initial_law = law;
  m.initial_sampler = law_sampler(law);
  return m;
}

StateSpaceModel squared_obs_model() {
  StateSpaceModel m;
  m.name = "squared_obs";
  m.dim_state = 1;
  m.dim_obs = 1;
  LinearGaussianDynamics dyn;
  dyn.transition = Matrix::Constant(1, 1, 0.5);
  dyn.offset = Vector::Zero(1);
  dyn.noise_cov = Matrix::Constant(1, 1, 0.75);
  m.linear_dynamics = dyn;
  m.transition = [](Eigen::Ref<Vector> x, RngStream& rng, int) {
    x(0) = 0.5 * x(0) + std::sqrt(0.75) * rng.normal();
  };
  GaussianMixtureLaw law;
  law.weights = {1.0};
  law.means = {Vector::Zero(1)};
  law.covs = {Matrix::Identity(1, 1)};
  m.initial_law = law;
  m.initial_sampler = [](Eigen::Ref<Vector> x, RngStream& rng) { x(0) = rng.normal(); };
  m.measurement_function = [](const Eigen::Ref<const Vector>& x) -> Vector {
    return Vector::Constant(1, x(0) * x(0) / 20.0);
  };
  m.measurement_matrix = Matrix::Zero(1, 1);
  m.obs_cov = Matrix::Constant(1, 1, 0.25);
  return m;
}

AugmentedModel squared_obs_augmented(double r) { return augment_model(squared_obs_model(), r); }

CevParams CevParams::from_log(const Vector& theta) {
  if (theta.size() != 5) throw ShapeError("CEV parameter vector must have 5 entries");
  return CevParams{std::exp(theta(0)), std::exp(theta(1)), std::exp(theta(2)), std::exp(theta(3)),
                   std::exp(theta(4))};
}

Vector CevParams::to_log() const {
  Vector v(5);
  v << std::log(alpha), std::log(beta), std::log(sigma), std::log(gamma), std::log(sigma_y);
  return v;
}

CevParams cev_reference_params() {
  Vector v(5);
  v << 1.570, 0.815, -1.612, 0.486, -3.739;
  return CevParams::from_log(v);
}

StateSpaceModel cev_model(const CevParams& p, const CevOptions& opt) {
  if (!(p.alpha > 0.0 && p.beta > 0.0 && p.sigma > 0.0 && p.gamma >= 0.0 && p.sigma_y > 0.0)) {
    throw ValidationError("cev_model: parameters must be positive");
  }
  if (!(opt.delta > 0.0) || opt.substeps < 1) throw ValidationError("cev_model: bad time step");
  StateSpaceModel m;
  m.name = "cev";
  m.dim_state = 1;
  m.dim_obs = 1;
  m.measurement_matrix = Matrix::Identity(1, 1);
  m.obs_cov = Matrix::Constant(1, 1, p.sigma_y * p.sigma_y);
  m.state_floor = opt.floor;

  const double floor = opt.floor;
  const double h = opt.delta / opt.substeps;
  const double sqrt_h = std::sqrt(h);
  const int steps = opt.substeps;
  m.transition = [p, floor, h, sqrt_h, steps](Eigen::Ref<Vector> x, RngStream& rng, int) {
    double v = x(0);
    for (int s = 0; s < steps; ++s) {
      v = v + h * (p.alpha - p.beta * v) + sqrt_h * p.sigma * std::pow(std::max(v, floor), p.gamma) * rng.normal();
      if (v < floor) v = floor;
    }
    x(0) = v;
  };
  if (steps == 1) {
    GaussianTransition gt;
    gt.moments = [p, floor, h](const Vector& prev, int, Vector& mean, Matrix& cov) {
      const double v = prev(0);
      mean = Vector::Constant(1, v + h * (p.alpha - p.beta * v));
      const double s = p.sigma * std::pow(std::max(v, floor), p.gamma);
      cov = Matrix::Constant(1, 1, h * s * s);
    };
    m.gaussian_transition = gt;
  }

  const double center = p.alpha / p.beta;
  const double sd0 = opt.x0_sd.value_or(p.sigma * std::pow(center, p.gamma) / std::sqrt(2.0 * p.beta));
  GaussianMixtureLaw law;
  law.weights = {1.0};
  law.means = {Vector::Constant(1, center)};
  law.covs = {Matrix::Constant(1, 1, sd0 * sd0)};
  m.initial_law = law;
  m.initial_sampler = [center, sd0, floor](Eigen::Ref<Vector> x, RngStream& rng) {
    x(0) = std::max(center + sd0 * rng.normal(), floor);
  };
  return m;
}

ModelFamily cev_family(const CevOptions& options) {
  ModelFamily f;
  f.name = "cev";
  f.parameter_names = {"log_alpha", "log_beta", "log_sigma", "log_gamma", "log_sigma_y"};
  f.build = [options](const Vector& theta) { return cev_model(CevParams::from_log(theta), options); };
  return f;
}

StateSpaceModel iid_variance_model(double s2) {
  if (!(s2 > 0.0)) throw ValidationError("iid_variance_model: variance must be positive");
  StateSpaceModel m;
  m.name = "iid_variance";
  m.dim_state = 1;
  m.dim_obs = 1;
  LinearGaussianDynamics dyn;
  dyn.transition = Matrix::Zero(1, 1);
  dyn.offset = Vector::Zero(1);
  dyn.noise_cov = Matrix::Constant(1, 1, s2);
  m.linear_dynamics = dyn;
  m.transition = linear_transition(dyn);
  GaussianMixtureLaw law;
  law.weights = {1.0};
  law.means = {Vector::Zero(1)};
  law.covs = {Matrix::Constant(1, 1, s2)};
  m.initial_law = law;
  m.initial_sampler = law_sampler(law);
  m.measurement_matrix = Matrix::Identity(1, 1);
  m.obs_cov = Matrix::Identity(1, 1);
  return m;
}

ModelFamily iid_variance_family() {
  ModelFamily f;
  f.name = "iid_variance";
  f.parameter_names = {"log_s2"};
  f.build = [](const Vector& theta) { return iid_variance_model(std::exp(theta(0))); };
  return f;
}

SimulationResult simulate(const StateSpaceModel& model, int T, RngStream& rng) {
  if (T < 1) throw ValidationError("simulate: T must be at least 1");
  if (model.dim_state < 1 || model.dim_obs < 1 || !model.transition || !model.initial_sampler) {
    throw ValidationError("simulate: incomplete model");
  }
  const Matrix noise = psd_factor(model.obs_cov);
  SimulationResult out;
  out.states.resize(model.dim_state, T);
  out.observations.resize(model.dim_obs, T);
  Vector x(model.dim_state);
  model.initial_sampler(x, rng);
  Vector z(model.dim_obs);
  for (int t = 1; t <= T; ++t) {
    model.transition(x, rng, t);
    if (model.state_floor && x(0) <= *model.state_floor) ++out.floor_hits;
    for (Eigen::Index r = 0; r < z.size(); ++r) z(r) = rng.normal();
    out.states.col(t - 1) = x;
    out.observations.col(t - 1) = model.measurement_mean(x, t) + noise * z;
  }
  return out;
}

double exact_loglik(const StateSpaceModel& model, const Matrix& obs) {
  return kalman_mixture_loglik(model, obs);
}

FilterRun reference_sir(const StateSpaceModel& model, const Matrix& obs, Eigen::Index n,
                        std::uint64_t seed, const std::vector<double>& quantile_levels,
                        int quantile_coordinate) {
  FilterConfig cfg;
  cfg.n = n;
  cfg.seed = seed;
  cfg.quantile_levels = quantile_levels;
  cfg.quantile_coordinate = quantile_coordinate;
  FilterRun run = run_sir(model, obs, cfg);
  run.filter = "reference-SIR";
  return run;
}

double reference_sir_loglik(const StateSpaceModel& model, const Matrix& obs, Eigen::Index n,
                            std::uint64_t seed) {
  return reference_sir(model, obs, n, seed).loglik;
}

}  // namespace pspf
