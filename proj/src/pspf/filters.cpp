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

#include "pspf/filters.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <span>

#include "pspf/error.hpp"
#include "pspf/ps_update.hpp"
#include "pspf/resampling.hpp"
#include "pspf/swarm.hpp"

namespace pspf {

namespace {

using Clock = std::chrono::steady_clock;

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string at_step(std::string_view filter, int t, const std::exception& e) {
  return std::string(filter) + ": failure at t=" + std::to_string(t) + ": " + e.what();
}

double log_mean(const Vector& log_w, double* lse_out = nullptr) {
  const double lse = log_sum_exp(std::span<const double>(log_w.data(), static_cast<std::size_t>(log_w.size())));
  if (lse_out != nullptr) *lse_out = lse;
  return lse - std::log(static_cast<double>(log_w.size()));
}

Vector normalized(const Vector& log_w, double lse) { return (log_w.array() - lse).exp().matrix(); }

void initialize(const StateSpaceModel& model, Matrix& x, std::uint64_t seed) {
  RngStream rng = RngStream::derive(seed, StreamPurpose::kInitial);
  for (Eigen::Index i = 0; i < x.cols(); ++i) model.initial_sampler(x.col(i), rng);
}

void propagate(const StateSpaceModel& model, Matrix& x, std::uint64_t seed, int t) {
  RngStream rng = RngStream::derive(seed, StreamPurpose::kPropagate, {static_cast<std::uint64_t>(t)});
  for (Eigen::Index i = 0; i < x.cols(); ++i) model.transition(x.col(i), rng, t);
}

void conditional_moments(const StateSpaceModel& model, const Vector& prev, int t, Vector& mean,
                         Matrix& cov) {
  if (model.gaussian_transition) {
    model.gaussian_transition->moments(prev, t, mean, cov);
    return;
  }
  const auto& ld = *model.linear_dynamics;
  mean = ld.transition * prev + ld.offset;
  cov = ld.noise_cov;
}

HomoskedasticGaussianMixture leading_block(const HomoskedasticGaussianMixture& mix, int k) {
  if (k == mix.dim()) return mix;
  HomoskedasticGaussianMixture m;
  m.weights = mix.weights;
  m.means = mix.means.topRows(k);
  m.common_cov = mix.common_cov.topLeftCorner(k, k);
  return m;
}

// Draws the next filter swarm from a posterior mixture.
Matrix sample_posterior(const HomoskedasticGaussianMixture& mix, const StateSpaceModel& model,
                        const FilterConfig& cfg, int t, FilterRun& run) {
  const int k = model.carried_dims();
  ResamplerKind kind = cfg.resampler;
  if (kind == ResamplerKind::kAuto) {
    kind = k == 1 ? ResamplerKind::kContinuous1d
                  : (k == 2 ? ResamplerKind::kContinuous2d : ResamplerKind::kDirect);
  }
  const auto tag = static_cast<std::uint64_t>(t);
  if (kind == ResamplerKind::kDirect || kind == ResamplerKind::kMultinomial) {
    RngStream idx = RngStream::derive(cfg.seed, StreamPurpose::kResampleIndex, {tag});
    RngStream noise = RngStream::derive(cfg.seed, StreamPurpose::kResampleNoise, {tag});
    return sample_mixture_direct(mix, cfg.n, idx, noise);
  }
  RngStream rng = RngStream::derive(cfg.seed, StreamPurpose::kResampleOffset, {tag});
  ResampleDiagnostics diag;
  Matrix lead;
  if (kind == ResamplerKind::kContinuous1d) {
    lead = resample_continuous_1d(leading_block(mix, 1), cfg.n, cfg.grid_1d, rng, &diag);
  } else {
    lead = resample_continuous_2d(leading_block(mix, 2), cfg.n, cfg.grid_2d, cfg.grid_2d, rng, &diag);
  }
  run.grid_widenings += diag.widened ? 1 : 0;
  run.grid_truncations += diag.truncated ? 1 : 0;
  if (lead.rows() == mix.dim()) return lead;
  // Coordinates past the carried block are regenerated by the transition.
  Matrix out(mix.dim(), cfg.n);
  out.topRows(lead.rows()) = lead;
  const Vector mean = mix.means * mix.weights;
  out.bottomRows(mix.dim() - lead.rows()).colwise() = mean.tail(mix.dim() - lead.rows());
  return out;
}

void record_band(const HomoskedasticGaussianMixture& mix, const FilterConfig& cfg, FilterRun& run) {
  if (cfg.band_coordinate < 0) return;
  const auto m = mix.marginal(cfg.band_coordinate);
  run.band.push_back({m.quantile_1d(0.025), m.quantile_1d(0.975)});
}

void record_band_weighted(const Matrix& x, const Vector& w, const FilterConfig& cfg, FilterRun& run) {
  if (cfg.band_coordinate < 0) return;
  const Vector v = x.row(cfg.band_coordinate).transpose();
  run.band.push_back({weighted_quantile(v, w, 0.025), weighted_quantile(v, w, 0.975)});
}

void final_from_mixture(const HomoskedasticGaussianMixture& mix, const FilterConfig& cfg, FilterRun& run) {
  run.final_mean = mix.means * mix.weights;
  if (cfg.quantile_levels.empty()) return;
  const auto m = mix.marginal(cfg.quantile_coordinate);
  for (const double p : cfg.quantile_levels) run.final_quantiles.push_back(m.quantile_1d(p));
}

void final_from_weighted(const Matrix& x, const Vector& w, const FilterConfig& cfg, FilterRun& run) {
  run.final_mean = x * w;
  if (cfg.quantile_levels.empty()) return;
  const Vector v = x.row(cfg.quantile_coordinate).transpose();
  for (const double p : cfg.quantile_levels) run.final_quantiles.push_back(weighted_quantile(v, w, p));
}

void check_obs(const StateSpaceModel& model, const Matrix& obs) {
  model.validate();
  if (obs.rows() != model.dim_obs) throw ShapeError("observations must have dim_obs rows");
  if (obs.cols() < 1) throw ValidationError("need at least one observation");
}

// Shared body of the pre-smoothed filters; b_at(t, x, moments, y, M) picks b.
template <class Chooser>
FilterRun run_presmoothed(std::string_view name, const StateSpaceModel& model, const Matrix& obs,
                          const FilterConfig& cfg, Chooser&& choose_b) {
  check_obs(model, obs);
  if (!model.has_linear_measurement()) {
    throw UnsupportedModelError(std::string(name) + " needs a linear measurement; augment the state first");
  }
  const auto start = Clock::now();
  FilterRun run;
  run.filter = std::string(name);
  const auto T = static_cast<int>(obs.cols());
  Matrix x(model.dim_state, cfg.n);
  initialize(model, x, cfg.seed);
  for (int t = 1; t <= T; ++t) {
    propagate(model, x, cfg.seed, t);
    const Vector y = obs.col(t - 1);
    const Matrix& m = model.measurement(t);
    try {
      const Moments mom = swarm_moments(x);
      (void)Cholesky(mom.cov, "swarm covariance");  // a collapsed swarm is a hard failure
      const double b = choose_b(t, x, mom, y, m, run);
      const PsUpdateResult upd = ps_update(x, mom, y, m, model.obs_cov, b);
      run.increments.push_back(upd.log_p_y);
      run.loglik += upd.log_p_y;
      run.b_trace.push_back(b);
      record_band(upd.posterior, cfg, run);
      if (t == T) final_from_mixture(upd.posterior, cfg, run);
      if (t < T || cfg.keep_swarms) {
        x = sample_posterior(upd.posterior, model, cfg, t, run);
        if (cfg.keep_swarms) run.swarms.push_back(x);
      }
    } catch (const SingularCovarianceError& e) {
      throw FilterFailure(at_step(name, t, e));
    } catch (const InsufficientSampleError& e) {
      throw FilterFailure(at_step(name, t, e));
    }
  }
  run.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return run;
}

}  // namespace

std::string_view to_string(FilterKind kind) {
  switch (kind) {
    case FilterKind::kPspf: return "PSPF";
    case FilterKind::kSir: return "SIR";
    case FilterKind::kEnkf: return "EnKF";
    case FilterKind::kMisePre: return "MISE-Pre";
    case FilterKind::kMisePost: return "MISE-Post";
    case FilterKind::kAsir: return "ASIR";
    case FilterKind::kFasir: return "FASIR";
  }
  return "?";
}

std::string_view to_string(ResamplerKind kind) {
  switch (kind) {
    case ResamplerKind::kAuto: return "auto";
    case ResamplerKind::kDirect: return "direct";
    case ResamplerKind::kContinuous1d: return "continuous-1d";
    case ResamplerKind::kContinuous2d: return "continuous-2d";
    case ResamplerKind::kMultinomial: return "multinomial";
  }
  return "?";
}

FilterKind parse_filter_kind(std::string_view name) {
  const std::string s = lower(name);
  for (auto k : {FilterKind::kPspf, FilterKind::kSir, FilterKind::kEnkf, FilterKind::kMisePre,
                 FilterKind::kMisePost, FilterKind::kAsir, FilterKind::kFasir}) {
    if (lower(to_string(k)) == s) return k;
  }
  throw ValidationError("unknown filter type '" + std::string(name) + "'");
}

ResamplerKind parse_resampler_kind(std::string_view name) {
  const std::string s = lower(name);
  for (auto k : {ResamplerKind::kAuto, ResamplerKind::kDirect, ResamplerKind::kContinuous1d,
                 ResamplerKind::kContinuous2d, ResamplerKind::kMultinomial}) {
    if (to_string(k) == s) return k;
  }
  throw ValidationError("unknown resampler '" + std::string(name) + "'");
}

void FilterConfig::validate(FilterKind kind) const {
  const bool presmoothed = kind == FilterKind::kPspf || kind == FilterKind::kEnkf ||
                           kind == FilterKind::kMisePre;
  if (n < 1) throw ValidationError("particle count must be at least 1");
  if (presmoothed && n < 4) throw ValidationError("pre-smoothed filters need at least 4 particles");
  if (kind == FilterKind::kMisePost && n < 2) throw ValidationError("MISE-Post needs at least 2 particles");
  if (fixed_b && !(*fixed_b >= 0.0 && *fixed_b <= 1.0)) throw ValidationError("fixed b must lie in [0,1]");
  if (bandwidth.em.iterations < 1) throw ValidationError("EM iterations must be at least 1");
  if (bandwidth.em.subsample && *bandwidth.em.subsample < 4) throw ValidationError("EM subsample must be at least 4");
  if (!(bandwidth.tolerance > 0.0)) throw ValidationError("bandwidth tolerance must be positive");
  if (!(mise_scale > 0.0)) throw ValidationError("MISE scale must be positive");
  for (const double p : quantile_levels) {
    if (!(p > 0.0 && p < 1.0)) throw ValidationError("quantile levels must lie in (0,1)");
  }
}

bool has_gaussian_transition(const StateSpaceModel& model) {
  return model.gaussian_transition.has_value() || model.linear_dynamics.has_value();
}

Vector measurement_log_weights(const StateSpaceModel& model, const Matrix& states, const Vector& y,
                               int t) {
  const Cholesky chol(symmetrize(model.obs_cov), "obs_cov");
  Matrix resid;
  if (model.has_linear_measurement()) {
    resid = (-(model.measurement(t) * states)).colwise() + y;
  } else {
    resid.resize(y.size(), states.cols());
    for (Eigen::Index i = 0; i < states.cols(); ++i) resid.col(i) = y - model.measurement_function(states.col(i));
  }
  return residual_log_densities(chol, resid);
}

FilterRun run_pspf(const StateSpaceModel& model, const Matrix& obs, const FilterConfig& cfg) {
  cfg.validate(FilterKind::kPspf);
  return run_presmoothed(
      "PSPF", model, obs, cfg,
      [&](int t, const Matrix& x, const Moments& mom, const Vector& y, const Matrix& m, FilterRun& run) {
        if (cfg.fixed_b) return *cfg.fixed_b;
        RngStream rng = RngStream::derive(cfg.seed, StreamPurpose::kEm, {static_cast<std::uint64_t>(t)});
        const BandwidthSelection sel = select_bandwidth(x, mom, y, m, model.obs_cov, cfg.bandwidth, rng);
        run.em_fallbacks += sel.pilot.fallback ? 1 : 0;
        if (cfg.keep_criterion) run.criterion.push_back(sel.terms);
        return sel.b;
      });
}

FilterRun run_enkf(const StateSpaceModel& model, const Matrix& obs, const FilterConfig& cfg) {
  cfg.validate(FilterKind::kEnkf);
  return run_presmoothed("EnKF", model, obs, cfg,
                         [](int, const Matrix&, const Moments&, const Vector&, const Matrix&,
                            FilterRun&) { return 0.0; });
}

FilterRun run_mise_pre(const StateSpaceModel& model, const Matrix& obs, const FilterConfig& cfg) {
  cfg.validate(FilterKind::kMisePre);
  const double b = cfg.fixed_b.value_or(
      b_from_bandwidth(mise_bandwidth(model.dim_state, cfg.n, cfg.mise_scale)));
  return run_presmoothed("MISE-Pre", model, obs, cfg,
                         [b](int, const Matrix&, const Moments&, const Vector&, const Matrix&,
                             FilterRun&) { return b; });
}

FilterRun run_sir(const StateSpaceModel& model, const Matrix& obs, const FilterConfig& cfg) {
  cfg.validate(FilterKind::kSir);
  check_obs(model, obs);
  const auto start = Clock::now();
  FilterRun run;
  run.filter = "SIR";
  const auto T = static_cast<int>(obs.cols());
  Matrix x(model.dim_state, cfg.n);
  initialize(model, x, cfg.seed);
  for (int t = 1; t <= T; ++t) {
    propagate(model, x, cfg.seed, t);
    const Vector lw = measurement_log_weights(model, x, obs.col(t - 1), t);
    double lse = 0.0;
    const double inc = log_mean(lw, &lse);
    if (!std::isfinite(inc)) throw FilterFailure("SIR: all weights vanish at t=" + std::to_string(t));
    run.increments.push_back(inc);
    run.loglik += inc;
    const Vector w = normalized(lw, lse);
    record_band_weighted(x, w, cfg, run);
    if (t == T) final_from_weighted(x, w, cfg, run);
    if (t < T || cfg.keep_swarms) {
      RngStream rng = RngStream::derive(cfg.seed, StreamPurpose::kResampleIndex, {static_cast<std::uint64_t>(t)});
      x = resample_multinomial(w, x, cfg.n, rng).particles();
      if (cfg.keep_swarms) run.swarms.push_back(x);
    }
  }
  run.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return run;
}

FilterRun run_mise_post(const StateSpaceModel& model, const Matrix& obs, const FilterConfig& cfg) {
  cfg.validate(FilterKind::kMisePost);
  check_obs(model, obs);
  const auto start = Clock::now();
  FilterRun run;
  run.filter = "MISE-Post";
  const double b = cfg.fixed_b.value_or(
      b_from_bandwidth(mise_bandwidth(model.dim_state, cfg.n, cfg.mise_scale)));
  const auto sp = ShrinkageParams::from_b(b);
  const auto T = static_cast<int>(obs.cols());
  Matrix x(model.dim_state, cfg.n);
  initialize(model, x, cfg.seed);
  for (int t = 1; t <= T; ++t) {
    propagate(model, x, cfg.seed, t);
    const Vector lw = measurement_log_weights(model, x, obs.col(t - 1), t);
    double lse = 0.0;
    const double inc = log_mean(lw, &lse);
    if (!std::isfinite(inc)) throw FilterFailure("MISE-Post: all weights vanish at t=" + std::to_string(t));
    run.increments.push_back(inc);
    run.loglik += inc;
    run.b_trace.push_back(b);
    HomoskedasticGaussianMixture post;
    post.weights = normalized(lw, lse);
    const Moments wm = weighted_moments(x, post.weights);
    post.means = (sp.b * x).colwise() + sp.a * wm.mean;
    post.common_cov = sp.g_prime * wm.cov;
    record_band(post, cfg, run);
    if (t == T) final_from_mixture(post, cfg, run);
    if (t < T || cfg.keep_swarms) {
      x = sample_posterior(post, model, cfg, t, run);
      if (cfg.keep_swarms) run.swarms.push_back(x);
    }
  }
  run.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return run;
}

FilterRun run_asir(const StateSpaceModel& model, const Matrix& obs, const FilterConfig& cfg) {
  cfg.validate(FilterKind::kAsir);
  check_obs(model, obs);
  if (!has_gaussian_transition(model)) {
    throw UnsupportedModelError("ASIR needs the conditional mean of the transition");
  }
  const auto start = Clock::now();
  FilterRun run;
  run.filter = "ASIR";
  const auto T = static_cast<int>(obs.cols());
  const Eigen::Index n = cfg.n;
  Matrix x(model.dim_state, n);
  initialize(model, x, cfg.seed);
  Vector mean;
  Matrix cov;
  for (int t = 1; t <= T; ++t) {
    const auto tag = static_cast<std::uint64_t>(t);
    const Vector y = obs.col(t - 1);
    Matrix mu(model.dim_state, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      conditional_moments(model, x.col(i), t, mean, cov);
      mu.col(i) = mean;
    }
    const Vector llam = measurement_log_weights(model, mu, y, t);
    double lse1 = 0.0;
    const double first = log_mean(llam, &lse1);
    if (!std::isfinite(first)) throw FilterFailure("ASIR: first-stage weights vanish at t=" + std::to_string(t));
    RngStream rng1 = RngStream::derive(cfg.seed, StreamPurpose::kFirstStage, {tag});
    const auto idx = multinomial_indices(normalized(llam, lse1), n, rng1);
    Matrix xn(model.dim_state, n);
    for (Eigen::Index j = 0; j < n; ++j) xn.col(j) = x.col(idx[static_cast<std::size_t>(j)]);
    propagate(model, xn, cfg.seed, t);
    Vector lomega = measurement_log_weights(model, xn, y, t);
    for (Eigen::Index j = 0; j < n; ++j) lomega(j) -= llam(idx[static_cast<std::size_t>(j)]);
    double lse2 = 0.0;
    const double second = log_mean(lomega, &lse2);
    if (!std::isfinite(second)) throw FilterFailure("ASIR: second-stage weights vanish at t=" + std::to_string(t));
    const double inc = first + second;
    run.increments.push_back(inc);
    run.loglik += inc;
    const Vector w = normalized(lomega, lse2);
    record_band_weighted(xn, w, cfg, run);
    if (t == T) final_from_weighted(xn, w, cfg, run);
    if (t < T || cfg.keep_swarms) {
      RngStream rng = RngStream::derive(cfg.seed, StreamPurpose::kResampleIndex, {tag});
      x = resample_multinomial(w, xn, n, rng).particles();
      if (cfg.keep_swarms) run.swarms.push_back(x);
    }
  }
  run.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return run;
}

FilterRun run_fasir(const StateSpaceModel& model, const Matrix& obs, const FilterConfig& cfg) {
  cfg.validate(FilterKind::kFasir);
  check_obs(model, obs);
  if (!has_gaussian_transition(model) || !model.has_linear_measurement()) {
    throw UnsupportedModelError("FASIR needs a Gaussian transition and a linear measurement");
  }
  const auto start = Clock::now();
  FilterRun run;
  run.filter = "FASIR";
  const auto T = static_cast<int>(obs.cols());
  const Eigen::Index n = cfg.n;
  const Eigen::Index d = model.dim_state;
  const bool constant_cov = !model.gaussian_transition.has_value();
  Matrix x(d, n);
  initialize(model, x, cfg.seed);
  Vector mean;
  Matrix cov;
  for (int t = 1; t <= T; ++t) {
    const auto tag = static_cast<std::uint64_t>(t);
    const Vector y = obs.col(t - 1);
    const Matrix& m = model.measurement(t);

    // Per-particle predictive moments; the shared-covariance case factors once.
    Matrix means(d, n);
    std::vector<Matrix> covs;
    if (!constant_cov) covs.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      conditional_moments(model, x.col(i), t, mean, cov);
      means.col(i) = mean;
      if (constant_cov) {
        if (i == 0) covs.push_back(cov);
      } else {
        covs[static_cast<std::size_t>(i)] = cov;
      }
    }
    auto gain_of = [&](const Matrix& c, Matrix& k, Matrix& post_factor, Cholesky& chol) {
      const Matrix mc = m * c;
      chol = Cholesky(symmetrize(model.obs_cov + mc * m.transpose()), "FASIR predictive covariance");
      k = chol.solve(mc).transpose();
      post_factor = psd_factor(symmetrize(c - k * mc));
    };

    Vector llam(n);
    Matrix k;
    Matrix pf;
    Cholesky chol;
    const Matrix resid = (-(m * means)).colwise() + y;
    if (constant_cov) {
      gain_of(covs[0], k, pf, chol);
      llam = residual_log_densities(chol, resid);
    } else {
      for (Eigen::Index i = 0; i < n; ++i) {
        Matrix ki;
        Matrix pfi;
        Cholesky ci;
        gain_of(covs[static_cast<std::size_t>(i)], ki, pfi, ci);
        llam(i) = ci.log_density_residual(resid.col(i));
      }
    }
    double lse = 0.0;
    const double inc = log_mean(llam, &lse);
    if (!std::isfinite(inc)) throw FilterFailure("FASIR: weights vanish at t=" + std::to_string(t));
    run.increments.push_back(inc);
    run.loglik += inc;

    RngStream rng1 = RngStream::derive(cfg.seed, StreamPurpose::kFirstStage, {tag});
    const auto idx = multinomial_indices(normalized(llam, lse), n, rng1);
    RngStream rngp = RngStream::derive(cfg.seed, StreamPurpose::kPropagate, {tag});
    Matrix xn(d, n);
    Vector z(d);
    for (Eigen::Index j = 0; j < n; ++j) {
      const Eigen::Index i = idx[static_cast<std::size_t>(j)];
      if (!constant_cov) gain_of(covs[static_cast<std::size_t>(i)], k, pf, chol);
      for (Eigen::Index r = 0; r < d; ++r) z(r) = rngp.normal();
      xn.col(j) = means.col(i) + k * resid.col(i) + pf * z;
    }
    if (model.state_floor) xn = xn.cwiseMax(*model.state_floor);
    const Vector w = Vector::Constant(n, 1.0 / static_cast<double>(n));
    record_band_weighted(xn, w, cfg, run);
    if (t == T) final_from_weighted(xn, w, cfg, run);
    x = std::move(xn);
    if (cfg.keep_swarms) run.swarms.push_back(x);
  }
  run.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return run;
}

FilterRun run_filter(FilterKind kind, const StateSpaceModel& model, const Matrix& obs,
                     const FilterConfig& config) {
  switch (kind) {
    case FilterKind::kPspf: return run_pspf(model, obs, config);
    case FilterKind::kSir: return run_sir(model, obs, config);
    case FilterKind::kEnkf: return run_enkf(model, obs, config);
    case FilterKind::kMisePre: return run_mise_pre(model, obs, config);
    case FilterKind::kMisePost: return run_mise_post(model, obs, config);
    case FilterKind::kAsir: return run_asir(model, obs, config);
    case FilterKind::kFasir: return run_fasir(model, obs, config);
  }
  throw ValidationError("unknown filter kind");
}

}  // namespace pspf
