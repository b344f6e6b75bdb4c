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

#include "pspf/sml.hpp"

#include <cmath>
#include <limits>

#include "pspf/error.hpp"
#include "pspf/kalman.hpp"

namespace pspf {

double family_loglik(const ModelFamily& family, const Matrix& obs, const Vector& theta,
                     const SmlConfig& config) {
  if (theta.size() != static_cast<Eigen::Index>(family.parameter_names.size())) {
    throw ShapeError(family.name + ": parameter vector has the wrong length");
  }
  const StateSpaceModel model = family.build(theta);
  if (config.likelihood == LikelihoodKind::kKalman) return kalman_mixture_loglik(model, obs);
  return run_pspf(model, obs, config.filter).loglik;
}

SmlResult estimate_sml(const ModelFamily& family, const Matrix& obs, const Vector& theta0,
                       const SmlConfig& config) {
  auto objective = [&](const Vector& theta) {
    try {
      const double l = family_loglik(family, obs, theta, config);
      return std::isfinite(l) ? -l : std::numeric_limits<double>::infinity();
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  // A failure at the start point is reported as such rather than as +inf.
  const double l0 = family_loglik(family, obs, theta0, config);
  if (!std::isfinite(l0)) throw FilterFailure(family.name + ": log-likelihood is not finite at theta0");

  SmlResult res;
  res.optimizer = minimize_bfgs(objective, theta0, config.bfgs);
  res.theta = res.optimizer.x;
  res.loglik = -res.optimizer.value;
  for (const double v : res.optimizer.trace) res.loglik_trace.push_back(-v);

  const Eigen::Index p = theta0.size();
  res.std_errors = Vector::Constant(p, std::numeric_limits<double>::quiet_NaN());
  res.covariance = Matrix::Constant(p, p, std::numeric_limits<double>::quiet_NaN());
  // Simulation noise can make a flat direction look indefinite; widen the step.
  double step = config.hessian_step;
  for (int attempt = 0; attempt < 3 && !res.hessian_ok; ++attempt, step *= 2.0) {
    const Matrix info = symmetrize(central_hessian(objective, res.theta, step));
    Eigen::LLT<Matrix> llt(info);
    if (info.allFinite() && llt.info() == Eigen::Success) {
      res.covariance = llt.solve(Matrix::Identity(p, p));
      res.std_errors = res.covariance.diagonal().cwiseSqrt();
      res.hessian_ok = true;
    }
  }
  return res;
}

}  // namespace pspf
