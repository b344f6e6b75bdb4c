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

#ifndef PSPF_SWARM_HPP
#define PSPF_SWARM_HPP

#include "pspf/linalg.hpp"

namespace pspf {

struct Moments {
  Vector mean;
  Matrix cov;
};

/// n equally weighted particles, stored one particle per column (d x n).
class Swarm {
 public:
  Swarm() = default;
  Swarm(Eigen::Index dim, Eigen::Index n) : particles_(dim, n) {}
  explicit Swarm(Matrix particles) : particles_(std::move(particles)) {}

  [[nodiscard]] Eigen::Index dim() const { return particles_.rows(); }
  [[nodiscard]] Eigen::Index size() const { return particles_.cols(); }
  [[nodiscard]] const Matrix& particles() const { return particles_; }
  [[nodiscard]] Matrix& particles() { return particles_; }
  [[nodiscard]] auto particle(Eigen::Index i) const { return particles_.col(i); }
  [[nodiscard]] auto particle(Eigen::Index i) { return particles_.col(i); }

  bool operator==(const Swarm& other) const {
    return particles_.rows() == other.particles_.rows() &&
           particles_.cols() == other.particles_.cols() && particles_ == other.particles_;
  }

 private:
  Matrix particles_;
};

/// Empirical mean and covariance with divisor n. Requires n >= 2.
Moments swarm_moments(const Swarm& swarm);
Moments swarm_moments(const Matrix& particles);

/// Weighted mean and covariance (weights sum to one, divisor 1).
Moments weighted_moments(const Matrix& particles, const Vector& weights);

}  // namespace pspf

#endif  // PSPF_SWARM_HPP
