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

#ifndef PSPF_LINALG_HPP
#define PSPF_LINALG_HPP

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>

#include <span>
#include <string>
#include <string_view>

namespace pspf {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

/// Cholesky factor of a symmetric positive-definite matrix.
///
/// Factorization is attempted once as given. On failure a jitter of
/// 1e-10 * trace / d is added to the diagonal and the factorization retried;
/// a second failure raises SingularCovarianceError naming the matrix.
class Cholesky {
 public:
  Cholesky() = default;
  Cholesky(const Matrix& spd, std::string_view name);

  [[nodiscard]] Eigen::Index dim() const { return lower_.rows(); }
  [[nodiscard]] const Matrix& lower() const { return lower_; }
  [[nodiscard]] double log_det() const { return log_det_; }
  [[nodiscard]] bool jittered() const { return jittered_; }

  /// Solves S z = v.
  [[nodiscard]] Vector solve(const Vector& v) const;
  [[nodiscard]] Matrix solve(const Matrix& v) const;
  /// Returns v' S^-1 v.
  [[nodiscard]] double quad_form(const Vector& v) const;
  /// log N(x | mean, S).
  [[nodiscard]] double log_density(const Vector& x, const Vector& mean) const;
  /// log N(r | 0, S) for a residual r.
  [[nodiscard]] double log_density_residual(const Vector& r) const;

 private:
  Matrix lower_;
  double log_det_ = 0.0;
  bool jittered_ = false;
};

/// log N(r_i | 0, S) for every column r_i of `resid`, with S given by its factor.
Vector residual_log_densities(const Cholesky& chol, const Matrix& resid);

/// log N(x | mean, cov). Throws SingularCovarianceError if cov is not SPD.
double gaussian_logpdf(const Vector& x, const Vector& mean, const Matrix& cov);

/// Scalar specialisation: log N(x | mean, var).
inline double gaussian_logpdf_1d(double x, double mean, double var) {
  const double r = x - mean;
  return -0.5 * (kLog2Pi + std::log(var) + r * r / var);
}

/// Numerically stable log(sum(exp(v))). Returns -inf for an empty span or all -inf.
double log_sum_exp(std::span<const double> v);

/// log(exp(a) + exp(b)).
double log_add_exp(double a, double b);

/// log(exp(a) - exp(b)) for a >= b; returns -inf when a == b.
double log_sub_exp(double a, double b);

/// (A + A') / 2.
Matrix symmetrize(const Matrix& a);

/// A factor L with L L' = a for a symmetric positive semi-definite matrix.
/// Negative eigenvalues from rounding are clipped at zero, so a zero matrix
/// yields an exactly zero factor.
Matrix psd_factor(const Matrix& a);

/// True when a is symmetric (to tol * max|a|) with eigenvalues >= -tol * trace.
bool is_symmetric_psd(const Matrix& a, double tol = 1e-12);

}  // namespace pspf

#endif  // PSPF_LINALG_HPP
