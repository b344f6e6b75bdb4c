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

#include "pspf/swarm.hpp"

#include "pspf/error.hpp"

namespace pspf {

Moments swarm_moments(const Swarm& swarm) { return swarm_moments(swarm.particles()); }

Moments swarm_moments(const Matrix& particles) {
  const Eigen::Index n = particles.cols();
  if (n < 2) throw InsufficientSampleError("swarm_moments needs at least 2 particles");
  Moments m;
  m.mean = particles.rowwise().mean();
  const Matrix centered = particles.colwise() - m.mean;
  m.cov = symmetrize(centered * centered.transpose() / static_cast<double>(n));
  return m;
}

Moments weighted_moments(const Matrix& particles, const Vector& weights) {
  if (weights.size() != particles.cols()) throw ShapeError("weighted_moments: size mismatch");
  Moments m;
  m.mean = particles * weights;
  const Matrix centered = particles.colwise() - m.mean;
  m.cov = symmetrize(centered * weights.asDiagonal() * centered.transpose());
  return m;
}

}  // namespace pspf
