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

#ifndef PSPF_OPTIMIZE_HPP
#define PSPF_OPTIMIZE_HPP

#include <functional>
#include <string>
#include <vector>

#include "pspf/linalg.hpp"

namespace pspf {

struct ScalarMinimum {
  double x = 0.0;
  double value = 0.0;
  int evaluations = 0;
};

/// Brent's bounded scalar minimizer (golden section with parabolic steps),
/// the same scheme MATLAB's fminbnd uses. Stops when the bracket shrinks to
/// about `xtol` around the current best point or after `max_evaluations`.
ScalarMinimum minimize_bounded(const std::function<double(double)>& f, double lo, double hi,
                               double xtol, int max_evaluations);

struct BfgsOptions {
  int max_iterations = 100;
  double gradient_tolerance = 1e-4;  ///< on the infinity norm of the gradient
  double function_tolerance = 1e-10; ///< relative decrease below which we stop
  double fd_step = 1e-4;             ///< central finite-difference step
  double max_step = 1.0;             ///< cap on the length of a trial step
};

struct BfgsResult {
  Vector x;
  double value = 0.0;
  Vector gradient;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  bool line_search_failed = false;
  std::vector<double> trace;  ///< objective value after each accepted step
  std::string message;
};

/// Central finite-difference gradient.
Vector central_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h,
                        int* evaluations = nullptr);

/// Central finite-difference Hessian (4-point mixed differences).
Matrix central_hessian(const std::function<double(const Vector&)>& f, const Vector& x, double h,
                       int* evaluations = nullptr);

/// Quasi-Newton minimization with finite-difference gradients and a
/// backtracking Armijo line search. On line-search failure the best point
/// found so far is returned with `line_search_failed` set.
BfgsResult minimize_bfgs(const std::function<double(const Vector&)>& f, const Vector& x0,
                         const BfgsOptions& options);

}  // namespace pspf

#endif  // PSPF_OPTIMIZE_HPP
