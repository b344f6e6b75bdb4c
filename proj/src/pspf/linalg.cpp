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

#include "pspf/linalg.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>

#include "pspf/error.hpp"

namespace pspf {

namespace {

bool try_factor(const Matrix& spd, Matrix& lower) {
  Eigen::LLT<Matrix> llt(spd);
  if (llt.info() != Eigen::Success) return false;
  lower = llt.matrixL();
  for (Eigen::Index i = 0; i < lower.rows(); ++i) {
    if (!(lower(i, i) > 0.0) || !std::isfinite(lower(i, i))) return false;
  }
  return true;
}

}  // namespace

Cholesky::Cholesky(const Matrix& spd, std::string_view name) {
  if (spd.rows() != spd.cols()) {
    throw ShapeError("covariance '" + std::string(name) + "' is not square");
  }
  if (!spd.allFinite()) {
    throw SingularCovarianceError("covariance '" + std::string(name) + "' has non-finite entries");
  }
  if (!try_factor(spd, lower_)) {
    const auto d = static_cast<double>(spd.rows());
    const double jitter = 1e-10 * std::max(spd.trace(), 0.0) / d;
    Matrix bumped = spd;
    bumped.diagonal().array() += jitter;
    if (!(jitter > 0.0) || !try_factor(bumped, lower_)) {
      throw SingularCovarianceError("covariance '" + std::string(name) +
                                    "' is not positive definite");
    }
    jittered_ = true;
  }
  log_det_ = 2.0 * lower_.diagonal().array().log().sum();
}

Vector Cholesky::solve(const Vector& v) const {
  Vector z = lower_.triangularView<Eigen::Lower>().solve(v);
  lower_.transpose().triangularView<Eigen::Upper>().solveInPlace(z);
  return z;
}

Matrix Cholesky::solve(const Matrix& v) const {
  Matrix z = lower_.triangularView<Eigen::Lower>().solve(v);
  lower_.transpose().triangularView<Eigen::Upper>().solveInPlace(z);
  return z;
}

double Cholesky::quad_form(const Vector& v) const {
  const Vector z = lower_.triangularView<Eigen::Lower>().solve(v);
  return z.squaredNorm();
}

double Cholesky::log_density(const Vector& x, const Vector& mean) const {
  return log_density_residual(x - mean);
}

double Cholesky::log_density_residual(const Vector& r) const {
  const auto d = static_cast<double>(lower_.rows());
  return -0.5 * (d * kLog2Pi + log_det_ + quad_form(r));
}

double gaussian_logpdf(const Vector& x, const Vector& mean, const Matrix& cov) {
  if (x.size() != mean.size() || cov.rows() != x.size()) {
    throw ShapeError("gaussian_logpdf: dimension mismatch");
  }
  return Cholesky(cov, "gaussian_logpdf cov").log_density(x, mean);
}

double log_sum_exp(std::span<const double> v) {
  if (v.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

double log_add_exp(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b == -std::numeric_limits<double>::infinity()) return a;
  return a + std::log1p(std::exp(b - a));
}

double log_sub_exp(double a, double b) {
  if (b == -std::numeric_limits<double>::infinity()) return a;
  if (!(a > b)) return -std::numeric_limits<double>::infinity();
  return a + std::log(-std::expm1(b - a));
}

Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

Matrix psd_factor(const Matrix& a) {
  if (a.rows() == 1) {
    Matrix f(1, 1);
    f(0, 0) = std::sqrt(std::max(a(0, 0), 0.0));
    return f;
  }
  if (a.isZero(0.0)) return Matrix::Zero(a.rows(), a.cols());
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().allFinite()) {
    Matrix l = llt.matrixL();
    if ((l.diagonal().array() > 0.0).all()) return l;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a));
  const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal();
}

bool is_symmetric_psd(const Matrix& a, double tol) {
  if (a.rows() != a.cols()) return false;
  const double scale = std::max(a.cwiseAbs().maxCoeff(), 1e-300);
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > tol * scale) return false;
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -tol * std::max(std::abs(a.trace()), 1e-300);
}

Vector residual_log_densities(const Cholesky& chol, const Matrix& resid) {
  const Matrix z = chol.lower().triangularView<Eigen::Lower>().solve(resid);
  const double log_norm = -0.5 * (static_cast<double>(resid.rows()) * kLog2Pi + chol.log_det());
  return (log_norm - 0.5 * z.colwise().squaredNorm().transpose().array()).matrix();
}

}  // namespace pspf
