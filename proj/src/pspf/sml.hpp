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

#ifndef PSPF_SML_HPP
#define PSPF_SML_HPP

#include <functional>
#include <string>
#include <vector>

#include "pspf/filters.hpp"
#include "pspf/model.hpp"
#include "pspf/optimize.hpp"

namespace pspf {

/// Maps an unconstrained parameter vector to a model.
struct ModelFamily {
  std::string name;
  std::vector<std::string> parameter_names;
  std::function<StateSpaceModel(const Vector& theta)> build;
};

enum class LikelihoodKind {
  kPspf,    ///< simulated likelihood from the PS filter with a fixed seed
  kKalman,  ///< exact likelihood (linear-Gaussian families only)
};

struct SmlConfig {
  FilterConfig filter;
  LikelihoodKind likelihood = LikelihoodKind::kPspf;
  BfgsOptions bfgs;
  double hessian_step = 5e-3;
};

struct SmlResult {
  Vector theta;
  Vector std_errors;    ///< NaN where the observed information is not positive definite
  Matrix covariance;
  double loglik = 0.0;
  bool hessian_ok = false;
  BfgsResult optimizer;
  std::vector<double> loglik_trace;  ///< log-likelihood after each accepted BFGS step
};

/// Log-likelihood of `obs` at theta. Filter failures propagate as FilterFailure.
double family_loglik(const ModelFamily& family, const Matrix& obs, const Vector& theta,
                     const SmlConfig& config);

/// Maximizes the (simulated) log-likelihood by BFGS with central finite
/// difference gradients; standard errors from the finite-difference observed
/// information at the optimum. Every evaluation reuses config.filter.seed.
SmlResult estimate_sml(const ModelFamily& family, const Matrix& obs, const Vector& theta0,
                       const SmlConfig& config);

}  // namespace pspf

#endif  // PSPF_SML_HPP
