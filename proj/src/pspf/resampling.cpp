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

#include "pspf/resampling.hpp"

#include <Eigen/LU>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>

#include "pspf/error.hpp"

namespace pspf {

namespace {

using Complex = std::complex<double>;

int next_pow2(int v) {
  int p = 1;
  while (p < v) p <<= 1;
  return p;
}

bool is_pow2(int v) { return v > 0 && (v & (v - 1)) == 0; }

void fft_lines(Eigen::MatrixXcd& m, bool inverse) {
  Eigen::FFT<double> fft;
  std::vector<Complex> in;
  std::vector<Complex> out;
  if (m.rows() > 1) {
    in.resize(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      for (Eigen::Index r = 0; r < m.rows(); ++r) in[static_cast<std::size_t>(r)] = m(r, c);
      if (inverse) {
        fft.inv(out, in);
      } else {
        fft.fwd(out, in);
      }
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = out[static_cast<std::size_t>(r)];
    }
  }
  if (m.cols() > 1) {
    in.resize(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) in[static_cast<std::size_t>(c)] = m(r, c);
      if (inverse) {
        fft.inv(out, in);
      } else {
        fft.fwd(out, in);
      }
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = out[static_cast<std::size_t>(c)];
    }
  }
}

// Normalized Gaussian kernel on the lattice offsets [-l1, l1] x [-l2, l2].
// A tiny multiple of the squared cell size is added to the covariance so that
// a zero covariance degrades continuously into a point mass.
Matrix lattice_kernel(const Matrix& cov, double step1, double step2, int max1, int max2, int* l1,
                      int* l2) {
  const bool two = cov.rows() == 2;
  Matrix c = cov;
  c(0, 0) += 1e-6 * step1 * step1;
  if (two) c(1, 1) += 1e-6 * step2 * step2;
  *l1 = std::min(max1, static_cast<int>(std::ceil(8.0 * std::sqrt(c(0, 0)) / step1)));
  *l2 = two ? std::min(max2, static_cast<int>(std::ceil(8.0 * std::sqrt(c(1, 1)) / step2))) : 0;
  Matrix prec;
  if (two) {
    const double det = c(0, 0) * c(1, 1) - c(0, 1) * c(1, 0);
    if (!(det > 0.0)) {
      // Rank-deficient kernel: keep the diagonal regularization only.
      c(0, 1) = c(1, 0) = std::copysign(std::sqrt(c(0, 0) * c(1, 1)) * (1.0 - 1e-9), c(0, 1));
    }
    prec = c.inverse();
  } else {
    prec = Matrix::Constant(1, 1, 1.0 / c(0, 0));
  }
  Matrix k(2 * *l1 + 1, 2 * *l2 + 1);
  for (int i = -*l1; i <= *l1; ++i) {
    for (int j = -*l2; j <= *l2; ++j) {
      const double v1 = i * step1;
      double q = prec(0, 0) * v1 * v1;
      if (two) {
        const double v2 = j * step2;
        q += 2.0 * prec(0, 1) * v1 * v2 + prec(1, 1) * v2 * v2;
      }
      k(i + *l1, j + *l2) = std::exp(-0.5 * q);
    }
  }
  k /= k.sum();
  return k;
}

// Linear convolution of `a` with a centred kernel, zero padded so the FFT's
// circular wrap never reaches the output window.
Matrix fft_convolve(const Matrix& a, const Matrix& kernel, int l1, int l2) {
  const auto n1 = static_cast<int>(a.rows());
  const auto n2 = static_cast<int>(a.cols());
  const int p1 = next_pow2(n1 + l1);
  const int p2 = (n2 == 1 && l2 == 0) ? 1 : next_pow2(n2 + l2);
  Eigen::MatrixXcd fa = Eigen::MatrixXcd::Zero(p1, p2);
  Eigen::MatrixXcd fk = Eigen::MatrixXcd::Zero(p1, p2);
  fa.topLeftCorner(n1, n2) = a.cast<Complex>();
  for (int i = -l1; i <= l1; ++i) {
    for (int j = -l2; j <= l2; ++j) fk((i + p1) % p1, (j + p2) % p2) = kernel(i + l1, j + l2);
  }
  fft_lines(fa, false);
  fft_lines(fk, false);
  fa = fa.cwiseProduct(fk).eval();
  fft_lines(fa, true);
  Matrix out = fa.topLeftCorner(n1, n2).real();
  // Round-off leaves +-1e-17 noise where there is no mass.
  const double floor = 1e-15 * out.maxCoeff();
  out = out.unaryExpr([floor](double v) { return v > floor ? v : 0.0; });
  return out;
}

struct Axis {
  double lo;
  double hi;
  int n;
  [[nodiscard]] double step() const { return (hi - lo) / static_cast<double>(n - 1); }
};

Axis make_axis(double mean, double var, int n, double half_width_sd) {
  double sd = std::sqrt(std::max(var, 0.0));
  sd = std::max(sd, 1e-12 * (1.0 + std::abs(mean)));
  return Axis{mean - half_width_sd * sd, mean + half_width_sd * sd, n};
}

// Splits a point mass between the two neighbouring grid points. Returns false
// when the point lies outside the axis.
bool split(const Axis& ax, double x, int* j, double* f) {
  const double pos = (x - ax.lo) / ax.step();
  if (!(pos >= 0.0 && pos <= static_cast<double>(ax.n - 1))) return false;
  const double cell = std::floor(pos);
  *f = pos - cell;
  *j = static_cast<int>(cell);
  if (*j >= ax.n - 1) {
    *j = ax.n - 2;
    *f = 1.0;
  }
  return true;
}

double invert_cells(double lo_edge, double step, const Eigen::Ref<const Vector>& cdf, double u) {
  const double* begin = cdf.data();
  const double* end = begin + cdf.size();
  const double* it = std::upper_bound(begin, end, u);
  if (it == end) it = end - 1;
  const auto j = static_cast<Eigen::Index>(it - begin);
  const double prev = j == 0 ? 0.0 : cdf(j - 1);
  const double span = cdf(j) - prev;
  const double frac = span > 0.0 ? std::clamp((u - prev) / span, 0.0, 1.0) : 0.5;
  return lo_edge + step * (static_cast<double>(j) + frac);
}

void check_grid_size(int n_g) {
  if (!is_pow2(n_g) || n_g < 16) throw DomainError("grid size must be a power of two >= 16");
}

}  // namespace

double Grid1D::invert(double u) const {
  const double h = step();
  return invert_cells(lo - 0.5 * h, h, cdf, u);
}

double mixture_tail_mass(const HomoskedasticGaussianMixture& mix, double lo, double hi) {
  const double sd = std::sqrt(std::max(mix.common_cov(0, 0), 0.0));
  double tail = 0.0;
  for (Eigen::Index k = 0; k < mix.size(); ++k) {
    const double mu = mix.means(0, k);
    const double w = mix.weights(k);
    if (sd > 0.0) {
      const double zl = (lo - mu) / sd;
      const double zh = (mu - hi) / sd;
      if (zl > -8.5) tail += w * 0.5 * std::erfc(-zl / std::sqrt(2.0));
      if (zh > -8.5) tail += w * 0.5 * std::erfc(-zh / std::sqrt(2.0));
    } else if (mu < lo || mu > hi) {
      tail += w;
    }
  }
  return tail;
}

Grid1D build_grid_1d(const HomoskedasticGaussianMixture& mix, int n_g, double half_width_sd) {
  if (mix.dim() != 1) throw ShapeError("build_grid_1d needs a one-dimensional mixture");
  check_grid_size(n_g);
  const Moments mom = mix.moments();
  const Axis ax = make_axis(mom.mean(0), mom.cov(0, 0), n_g, half_width_sd);
  const double h = ax.step();

  Matrix bins = Matrix::Zero(n_g, 1);
  for (Eigen::Index k = 0; k < mix.size(); ++k) {
    int j = 0;
    double f = 0.0;
    if (!split(ax, mix.means(0, k), &j, &f)) continue;
    bins(j, 0) += mix.weights(k) * (1.0 - f);
    bins(j + 1, 0) += mix.weights(k) * f;
  }
  int l1 = 0;
  int l2 = 0;
  const Matrix kernel = lattice_kernel(mix.common_cov, h, 1.0, n_g - 1, 0, &l1, &l2);
  const Matrix mass = fft_convolve(bins, kernel, l1, l2);

  Grid1D g;
  g.lo = ax.lo;
  g.hi = ax.hi;
  g.n_g = n_g;
  g.values = mass.col(0) / h;
  g.cdf.resize(n_g);
  double acc = 0.0;
  for (int j = 0; j < n_g; ++j) {
    acc += mass(j, 0);
    g.cdf(j) = acc;
  }
  if (!(acc > 0.0)) throw FilterFailure("build_grid_1d: no mixture mass on the grid");
  g.cdf /= acc;
  g.values /= acc;
  g.cdf(n_g - 1) = 1.0;
  return g;
}

Grid2D build_grid_2d(const HomoskedasticGaussianMixture& mix, int n1, int n2, double half_width_sd) {
  if (mix.dim() != 2) throw ShapeError("build_grid_2d needs a two-dimensional mixture");
  check_grid_size(n1);
  check_grid_size(n2);
  const Moments mom = mix.moments();
  const Axis a1 = make_axis(mom.mean(0), mom.cov(0, 0), n1, half_width_sd);
  const Axis a2 = make_axis(mom.mean(1), mom.cov(1, 1), n2, half_width_sd);

  Matrix bins = Matrix::Zero(n1, n2);
  for (Eigen::Index k = 0; k < mix.size(); ++k) {
    int i = 0;
    int j = 0;
    double f1 = 0.0;
    double f2 = 0.0;
    if (!split(a1, mix.means(0, k), &i, &f1) || !split(a2, mix.means(1, k), &j, &f2)) continue;
    const double w = mix.weights(k);
    bins(i, j) += w * (1.0 - f1) * (1.0 - f2);
    bins(i + 1, j) += w * f1 * (1.0 - f2);
    bins(i, j + 1) += w * (1.0 - f1) * f2;
    bins(i + 1, j + 1) += w * f1 * f2;
  }
  int l1 = 0;
  int l2 = 0;
  const Matrix kernel = lattice_kernel(mix.common_cov, a1.step(), a2.step(), n1 - 1, n2 - 1, &l1, &l2);

  Grid2D g;
  g.lo1 = a1.lo;
  g.hi1 = a1.hi;
  g.lo2 = a2.lo;
  g.hi2 = a2.hi;
  g.n1 = n1;
  g.n2 = n2;
  g.mass = fft_convolve(bins, kernel, l1, l2);
  const double total = g.mass.sum();
  if (!(total > 0.0)) throw FilterFailure("build_grid_2d: no mixture mass on the grid");
  g.mass /= total;
  g.cond_cdf.resize(n2, n1);
  g.empty_column.assign(static_cast<std::size_t>(n1), false);
  for (int i = 0; i < n1; ++i) {
    double acc = 0.0;
    for (int j = 0; j < n2; ++j) {
      acc += g.mass(i, j);
      g.cond_cdf(j, i) = acc;
    }
    if (acc <= 1e-14) {
      g.empty_column[static_cast<std::size_t>(i)] = true;
      g.cond_cdf.col(i).setZero();
    } else {
      g.cond_cdf.col(i) /= acc;
      g.cond_cdf(n2 - 1, i) = 1.0;
    }
  }
  return g;
}

Matrix sample_mixture_direct(const HomoskedasticGaussianMixture& mix, Eigen::Index n,
                             RngStream& index_rng, RngStream& noise_rng) {
  const auto idx = multinomial_indices(mix.weights, n, index_rng);
  const Eigen::Index d = mix.dim();
  Matrix out(d, n);
  for (Eigen::Index j = 0; j < n; ++j) out.col(j) = mix.means.col(idx[static_cast<std::size_t>(j)]);
  const Matrix factor = psd_factor(mix.common_cov);
  if (!factor.isZero(0.0)) {
    Matrix z(d, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index r = 0; r < d; ++r) z(r, j) = noise_rng.normal();
    }
    out.noalias() += factor * z;
  }
  return out;
}

Swarm sample_mixture_direct(const HomoskedasticGaussianMixture& mix, Eigen::Index n, RngStream& rng) {
  return Swarm(sample_mixture_direct(mix, n, rng, rng));
}

Matrix resample_continuous_1d(const HomoskedasticGaussianMixture& mix, Eigen::Index n, int n_g,
                              RngStream& rng, ResampleDiagnostics* diagnostics) {
  if (mix.dim() != 1) throw ShapeError("resample_continuous_1d needs a one-dimensional mixture");
  if (n < 1) throw DomainError("resample_continuous_1d: n must be positive");
  ResampleDiagnostics diag;
  Grid1D grid = build_grid_1d(mix, n_g);
  diag.tail_mass = mixture_tail_mass(mix, grid.lo, grid.hi);
  if (diag.tail_mass > kTailTolerance) {
    grid = build_grid_1d(mix, n_g, 2.0 * kGridHalfWidthSd);
    diag.widened = true;
    diag.tail_mass = mixture_tail_mass(mix, grid.lo, grid.hi);
    diag.truncated = diag.tail_mass > kTailTolerance;
  }
  if (diagnostics != nullptr) *diagnostics = diag;

  const double u = rng.uniform();
  Matrix out(1, n);
  const double h = grid.step();
  const double lo_edge = grid.lo - 0.5 * h;
  const double* cdf = grid.cdf.data();
  Eigen::Index j = 0;
  const auto inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double ui = (static_cast<double>(i) + u) * inv_n;
    while (j < grid.n_g - 1 && cdf[j] <= ui) ++j;
    const double prev = j == 0 ? 0.0 : cdf[j - 1];
    const double span = cdf[j] - prev;
    const double frac = span > 0.0 ? std::clamp((ui - prev) / span, 0.0, 1.0) : 0.5;
    out(0, i) = lo_edge + h * (static_cast<double>(j) + frac);
  }
  return out;
}

Matrix resample_continuous_2d(const HomoskedasticGaussianMixture& mix, Eigen::Index n, int n1,
                              int n2, RngStream& rng, ResampleDiagnostics* diagnostics) {
  if (mix.dim() != 2) throw ShapeError("resample_continuous_2d needs a two-dimensional mixture");
  ResampleDiagnostics d1;
  const Matrix x1 = resample_continuous_1d(mix.marginal(0), n, n1, rng, &d1);

  Grid2D grid = build_grid_2d(mix, n1, n2);
  const HomoskedasticGaussianMixture m2 = mix.marginal(1);
  double tail2 = mixture_tail_mass(m2, grid.lo2, grid.hi2);
  bool widened = false;
  if (tail2 > kTailTolerance || d1.widened) {
    grid = build_grid_2d(mix, n1, n2, 2.0 * kGridHalfWidthSd);
    tail2 = mixture_tail_mass(m2, grid.lo2, grid.hi2);
    widened = true;
  }
  if (diagnostics != nullptr) {
    diagnostics->tail_mass = d1.tail_mass + tail2;
    diagnostics->widened = widened;
    diagnostics->truncated = d1.truncated || tail2 > kTailTolerance;
  }

  const double h1 = grid.step1();
  const double h2 = grid.step2();
  const double lo2_edge = grid.lo2 - 0.5 * h2;
  Matrix out(2, n);
  Vector cdf(n2);
  auto nearest_filled = [&](int j) {
    for (int off = 1; off < grid.n1; ++off) {
      if (j - off >= 0 && !grid.empty_column[static_cast<std::size_t>(j - off)]) return j - off;
      if (j + off < grid.n1 && !grid.empty_column[static_cast<std::size_t>(j + off)]) return j + off;
    }
    throw FilterFailure("resample_continuous_2d: empty joint grid");
  };
  for (Eigen::Index i = 0; i < n; ++i) {
    const double pos = std::clamp((x1(0, i) - grid.lo1) / h1, 0.0, static_cast<double>(grid.n1 - 1));
    int j = std::min(static_cast<int>(std::floor(pos)), grid.n1 - 2);
    double f = pos - j;
    const bool e0 = grid.empty_column[static_cast<std::size_t>(j)];
    const bool e1 = grid.empty_column[static_cast<std::size_t>(j + 1)];
    if (e0 && e1) {
      cdf = grid.cond_cdf.col(nearest_filled(f < 0.5 ? j : j + 1));
    } else if (e0) {
      cdf = grid.cond_cdf.col(j + 1);
    } else if (e1) {
      cdf = grid.cond_cdf.col(j);
    } else {
      cdf = (1.0 - f) * grid.cond_cdf.col(j) + f * grid.cond_cdf.col(j + 1);
    }
    out(0, i) = x1(0, i);
    out(1, i) = invert_cells(lo2_edge, h2, cdf, rng.uniform());
  }
  return out;
}

std::vector<Eigen::Index> multinomial_indices(const Vector& weights, Eigen::Index n, RngStream& rng) {
  const Eigen::Index m = weights.size();
  if (m == 0) throw DomainError("multinomial resampling: empty weight vector");
  std::vector<double> cum(static_cast<std::size_t>(m));
  double acc = 0.0;
  for (Eigen::Index k = 0; k < m; ++k) {
    const double w = weights(k);
    if (!(w >= 0.0) || !std::isfinite(w)) throw DomainError("multinomial resampling: negative or non-finite weight");
    acc += w;
    cum[static_cast<std::size_t>(k)] = acc;
  }
  if (!(acc > 0.0)) throw DomainError("multinomial resampling: weights sum to zero");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  for (auto& v : idx) {
    const double u = rng.uniform() * acc;
    auto it = std::upper_bound(cum.begin(), cum.end(), u);
    if (it == cum.end()) --it;
    v = static_cast<Eigen::Index>(it - cum.begin());
  }
  return idx;
}

Swarm resample_multinomial(const Vector& weights, const Matrix& locations, Eigen::Index n,
                           RngStream& rng) {
  if (weights.size() != locations.cols()) throw ShapeError("resample_multinomial: size mismatch");
  const auto idx = multinomial_indices(weights, n, rng);
  Matrix out(locations.rows(), n);
  for (Eigen::Index j = 0; j < n; ++j) out.col(j) = locations.col(idx[static_cast<std::size_t>(j)]);
  return Swarm(std::move(out));
}

double weighted_quantile(const Vector& values, const Vector& weights, double p) {
  if (values.size() != weights.size() || values.size() == 0) throw ShapeError("weighted_quantile: size mismatch");
  if (!(p > 0.0 && p < 1.0)) throw DomainError("weighted_quantile: p must lie in (0,1)");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(values.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return values(a) < values(b); });
  const double total = weights.sum();
  double acc = 0.0;
  for (const auto k : order) {
    acc += weights(k);
    if (acc >= p * total) return values(k);
  }
  return values(order.back());
}

}  // namespace pspf
