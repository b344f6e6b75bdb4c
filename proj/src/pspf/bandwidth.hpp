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

#ifndef PSPF_BANDWIDTH_HPP
#define PSPF_BANDWIDTH_HPP

#include <array>
#include <optional>

#include "pspf/linalg.hpp"
#include "pspf/rng.hpp"
#include "pspf/swarm.hpp"

namespace pspf {

/// Gaussian pilot N(mean, cov) built from the swarm moments.
struct VariancePilot {
  Vector mean;
  Matrix cov;
};

/// Two-component Gaussian mixture pilot used for the squared-bias term.
struct BiasPilot {
  std::array<double, 2> weights{1.0, 0.0};
  std::array<Vector, 2> means;
  std::array<Matrix, 2> covs;
  int reinitializations = 0;
  bool fallback = false;  ///< true when EM collapsed twice and the variance pilot is used
};

enum class EmInit {
  /// Soft split of the swarm along its principal axis. Responsibilities are a
  /// smooth function of the particle positions, so the pilot (and with it the
  /// selected b) moves continuously with model parameters.
  kPrincipalAxis,
  /// Means at two random particles, the second drawn with probability
  /// proportional to its squared distance from the first (k-means++ style).
  kRandomPair,
};

struct EmOptions {
  int iterations = 4;
  /// Particles used by EM; nullopt uses the whole swarm.
  std::optional<int> subsample = 2000;
  EmInit init = EmInit::kPrincipalAxis;
};

/// Fits the bias pilot with a fixed number of EM iterations. A component whose
/// covariance stops being positive definite is re-seeded from the variance
/// pilot with doubled covariance; a second collapse returns the single
/// component fallback q = (1, 0) with both components equal to the variance
/// pilot.
BiasPilot fit_bias_pilot(const Matrix& particles, const Moments& moments, const EmOptions& options,
                         RngStream& rng);
BiasPilot fit_bias_pilot(const Swarm& swarm, int em_iters, std::optional<int> subsample,
                         RngStream& rng);

/// Parts of the practical MSE at one b. Log-scale fields are exact even when
/// the natural-scale values underflow.
struct CriterionTerms {
  double b = 0.0;
  double log_rho_b_hat = 0.0;
  double log_rho_b = 0.0;
  double log_bias_sq = 0.0;
  double log_rho_v1 = 0.0;
  double log_rho_v2 = 0.0;
  double log_variance = 0.0;
  double log_total = 0.0;

  [[nodiscard]] double bias_sq() const { return std::exp(log_bias_sq); }
  [[nodiscard]] double rho_v1() const { return std::exp(log_rho_v1); }
  [[nodiscard]] double rho_v2() const { return std::exp(log_rho_v2); }
  [[nodiscard]] double variance() const { return std::exp(log_variance); }
  [[nodiscard]] double total() const { return std::exp(log_total); }
};

/// Observation, measurement model and pilots for one update, with the
/// b-independent pieces precomputed. The f-evaluators take the Wishart slot
/// sigma_tilde explicitly; production code passes the swarm covariance.
class CriterionContext {
 public:
  CriterionContext(Vector y, Matrix measurement, Matrix obs_cov, Eigen::Index n,
                   VariancePilot variance_pilot, BiasPilot bias_pilot);

  [[nodiscard]] Eigen::Index n() const { return n_; }
  [[nodiscard]] const VariancePilot& variance_pilot() const { return vpilot_; }
  [[nodiscard]] const BiasPilot& bias_pilot() const { return bpilot_; }
  [[nodiscard]] const Matrix& measurement() const { return m_; }
  [[nodiscard]] const Matrix& obs_cov() const { return obs_cov_; }
  [[nodiscard]] const Vector& y() const { return y_; }

  [[nodiscard]] double log_f0(double b, const Matrix& sigma_tilde) const;
  [[nodiscard]] double log_f1(double b, const Matrix& sigma_tilde) const;
  [[nodiscard]] double log_f2(double b, const Matrix& sigma_tilde) const;
  [[nodiscard]] double log_f3(double b, const Matrix& sigma_tilde) const;
  /// (M'F^-1 ybar)(M'F^-1 ybar)' - M'F^-1 M with F = obs_cov + (1 + a^2/n) M cov M'.
  [[nodiscard]] Matrix f1_breve(double b) const;

  /// log of sum_l q_l N(y | M mu_l, obs_cov + M Sigma_l M'); independent of b.
  [[nodiscard]] double log_rho_b() const { return log_rho_b_; }

  [[nodiscard]] CriterionTerms evaluate(double b) const;

 private:
  double log_f0_impl(double b, const Matrix& msm_tilde) const;
  double log_f1_impl(double b, const Matrix& msm_tilde) const;
  double log_f2_impl(double b, const Matrix& msm_tilde) const;
  double log_f3_impl(double b, const Matrix& msm_tilde) const;

  Vector y_;
  Matrix m_;
  Matrix obs_cov_;
  Eigen::Index n_;
  VariancePilot vpilot_;
  BiasPilot bpilot_;
  Vector m_mean_;                     // M mu_x
  Matrix msm_;                        // M Sigma_x M'
  std::array<Vector, 2> m_bias_mean_; // M mu_l
  std::array<Matrix, 2> msm_bias_;    // M Sigma_l M'
  double log_rho_b_ = 0.0;
};

double f0(double b, const Matrix& sigma_tilde, const CriterionContext& ctx);
double f1(double b, const Matrix& sigma_tilde, const CriterionContext& ctx);
double f2(double b, const Matrix& sigma_tilde, const CriterionContext& ctx);
double f3(double b, const Matrix& sigma_tilde, const CriterionContext& ctx);

/// (rho_hat_B - rho_B)^2, zero at b = 1.
double practical_bias_sq(double b, const CriterionContext& ctx);
/// rho_V = rho_V1 + rho_V2.
double practical_variance(double b, const CriterionContext& ctx);
/// Practical MSE: practical_bias_sq + practical_variance.
double criterion(double b, const CriterionContext& ctx);

struct BandwidthOptions {
  EmOptions em;
  double tolerance = 1e-3;      ///< absolute tolerance on b for the bounded search
  int max_evaluations = 100;
  bool check_boundaries = true; ///< also compare C at b = 0 and b = 1
};

struct BandwidthSelection {
  double b = 1.0;
  CriterionTerms terms;  ///< at the selected b
  int evaluations = 0;
  BiasPilot pilot;
};

/// Moments, EM bias pilot, then bounded minimization of log C over [0,1].
BandwidthSelection select_bandwidth(const Matrix& particles, const Moments& moments,
                                    const Vector& y, const Matrix& measurement,
                                    const Matrix& obs_cov, const BandwidthOptions& options,
                                    RngStream& rng);
BandwidthSelection select_bandwidth(const Swarm& swarm, const Vector& y, const Matrix& measurement,
                                    const Matrix& obs_cov, const BandwidthOptions& options,
                                    RngStream& rng);

/// Gaussian-reference MISE plug-in: h = (4 / (d + 2))^(1/(d+4)) n^(-1/(d+4)) * constant_scale.
double mise_bandwidth(int dim, Eigen::Index n, double constant_scale = 1.0);
/// Maps a bandwidth h to the shrinkage coordinate b = 1 / sqrt(1 + h^2).
double b_from_bandwidth(double h);

}  // namespace pspf

#endif  // PSPF_BANDWIDTH_HPP
