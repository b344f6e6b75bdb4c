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

#include "pspf/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pspf/error.hpp"

namespace pspf {

ScalarMinimum minimize_bounded(const std::function<double(double)>& f, double lo, double hi,
                               double xtol, int max_evaluations) {
  if (!(lo < hi)) throw DomainError("minimize_bounded: empty interval");
  const double golden = 0.5 * (3.0 - std::sqrt(5.0));
  const double seps = std::sqrt(std::numeric_limits<double>::epsilon());
  double a = lo;
  double b = hi;
  double v = a + golden * (b - a);
  double w = v;
  double x = v;
  double d = 0.0;
  double e = 0.0;
  double fx = f(x);
  double fv = fx;
  double fw = fx;
  int evals = 1;

  double xm = 0.5 * (a + b);
  double tol1 = seps * std::abs(x) + xtol / 3.0;
  double tol2 = 2.0 * tol1;
  while (std::abs(x - xm) > tol2 - 0.5 * (b - a) && evals < max_evaluations) {
    bool use_golden = true;
    if (std::abs(e) > tol1) {
      double r = (x - w) * (fx - fv);
      double q = (x - v) * (fx - fw);
      double p = (x - v) * q - (x - w) * r;
      q = 2.0 * (q - r);
      if (q > 0.0) p = -p;
      q = std::abs(q);
      r = e;
      e = d;
      if (std::abs(p) < std::abs(0.5 * q * r) && p > q * (a - x) && p < q * (b - x)) {
        d = p / q;
        const double u = x + d;
        use_golden = false;
        if ((u - a) < tol2 || (b - u) < tol2) d = xm >= x ? tol1 : -tol1;
      }
    }
    if (use_golden) {
      e = x >= xm ? a - x : b - x;
      d = golden * e;
    }
    const double u = x + (d >= 0.0 ? 1.0 : -1.0) * std::max(std::abs(d), tol1);
    const double fu = f(u);
    ++evals;
    if (fu <= fx) {
      if (u >= x) {
        a = x;
      } else {
        b = x;
      }
      v = w;
      fv = fw;
      w = x;
      fw = fx;
      x = u;
      fx = fu;
    } else {
      if (u < x) {
        a = u;
      } else {
        b = u;
      }
      if (fu <= fw || w == x) {
        v = w;
        fv = fw;
        w = u;
        fw = fu;
      } else if (fu <= fv || v == x || v == w) {
        v = u;
        fv = fu;
      }
    }
    xm = 0.5 * (a + b);
    tol1 = seps * std::abs(x) + xtol / 3.0;
    tol2 = 2.0 * tol1;
  }
  return {x, fx, evals};
}

Vector central_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h,
                        int* evaluations) {
  Vector g(x.size());
  Vector xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp(i) = x(i) + h;
    const double fp = f(xp);
    xp(i) = x(i) - h;
    const double fm = f(xp);
    xp(i) = x(i);
    g(i) = (fp - fm) / (2.0 * h);
  }
  if (evaluations) *evaluations += static_cast<int>(2 * x.size());
  return g;
}

Matrix central_hessian(const std::function<double(const Vector&)>& f, const Vector& x, double h,
                       int* evaluations) {
  const Eigen::Index d = x.size();
  Matrix hess(d, d);
  const double f0 = f(x);
  int count = 1;
  Vector xp = x;
  for (Eigen::Index i = 0; i < d; ++i) {
    xp(i) = x(i) + 2.0 * h;
    const double fpp = f(xp);
    xp(i) = x(i) - 2.0 * h;
    const double fmm = f(xp);
    xp(i) = x(i);
    count += 2;
    hess(i, i) = (fpp - 2.0 * f0 + fmm) / (4.0 * h * h);
    for (Eigen::Index j = 0; j < i; ++j) {
      auto eval = [&](double si, double sj) {
        xp(i) = x(i) + si * h;
        xp(j) = x(j) + sj * h;
        const double v = f(xp);
        xp(i) = x(i);
        xp(j) = x(j);
        return v;
      };
      const double v = (eval(1, 1) - eval(1, -1) - eval(-1, 1) + eval(-1, -1)) / (4.0 * h * h);
      count += 4;
      hess(i, j) = v;
      hess(j, i) = v;
    }
  }
  if (evaluations) *evaluations += count;
  return hess;
}

BfgsResult minimize_bfgs(const std::function<double(const Vector&)>& f, const Vector& x0,
                         const BfgsOptions& options) {
  BfgsResult res;
  const Eigen::Index d = x0.size();
  int evals = 0;
  auto eval = [&](const Vector& x) {
    ++evals;
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  Vector x = x0;
  double fx = eval(x);
  if (!std::isfinite(fx)) throw FilterFailure("minimize_bfgs: objective is not finite at the start point");
  double fd = options.fd_step;
  Vector g = central_gradient(eval, x, fd);
  Matrix hinv = Matrix::Identity(d, d);
  bool scaled = false;
  bool fresh = true;  // hinv was just reset
  double h0 = 1.0;
  int widenings = 0;
  res.trace.push_back(fx);

  // Before giving up: reset the curvature, then widen the difference step so an
  // isolated jump in a simulated objective stops dominating the gradient.
  auto recover = [&](bool was_fresh) {
    if (g.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) return false;
    if (!was_fresh) {
      hinv = Matrix::Identity(d, d) * h0;
      fresh = true;
      return true;
    }
    if (widenings < 2) {
      ++widenings;
      fd *= 10.0;
      g = central_gradient(eval, x, fd);
      hinv = Matrix::Identity(d, d) * h0;
      fresh = true;
      return true;
    }
    return false;
  };

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    if (g.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) {
      res.converged = true;
      res.message = "gradient tolerance reached";
      break;
    }
    Vector p = -hinv * g;
    if (p.dot(g) >= 0.0) {
      hinv.setIdentity();
      p = -g;
    }
    const double pnorm = p.norm();
    if (pnorm > options.max_step) p *= options.max_step / pnorm;

    double step = 1.0;
    double f_new = 0.0;
    Vector x_new;
    bool accepted = false;
    const double slope = g.dot(p);
    for (int ls = 0; ls < 40; ++ls) {
      x_new = x + step * p;
      f_new = eval(x_new);
      if (f_new <= fx + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted && recover(fresh)) continue;
    if (!accepted) {
      res.line_search_failed = true;
      res.message = "line search failed";
      break;
    }
    const Vector g_new = central_gradient(eval, x_new, fd);
    const Vector s = x_new - x;
    const Vector yv = g_new - g;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      if (!scaled) {
        h0 = sy / yv.squaredNorm();
        hinv = Matrix::Identity(d, d) * h0;
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Matrix ident = Matrix::Identity(d, d);
      hinv = (ident - rho * s * yv.transpose()) * hinv * (ident - rho * yv * s.transpose()) +
             rho * s * s.transpose();
    }
    const double decrease = fx - f_new;
    x = x_new;
    g = g_new;
    fx = f_new;
    res.iterations = iter + 1;
    res.trace.push_back(fx);
    const bool was_fresh = fresh;
    fresh = false;
    if (decrease < options.function_tolerance * (1.0 + std::abs(fx))) {
      if (recover(was_fresh)) continue;
      // Stalled: finite-difference noise now dominates the gradient.
      res.converged = g.lpNorm<Eigen::Infinity>() < 10.0 * options.gradient_tolerance;
      res.message = "function decrease below tolerance";
      break;
    }
  }
  if (res.message.empty()) res.message = "iteration limit reached";
  res.x = x;
  res.value = fx;
  res.gradient = g;
  res.evaluations = evals;
  return res;
}

}  // namespace pspf
