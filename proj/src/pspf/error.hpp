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

#ifndef PSPF_ERROR_HPP
#define PSPF_ERROR_HPP

#include <stdexcept>
#include <string>

namespace pspf {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A covariance matrix could not be factorized, even after jitter.
class SingularCovarianceError : public Error {
 public:
  using Error::Error;
};

/// An argument lies outside its mathematical domain (b outside [0,1], negative weight, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Matrix or vector dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class InsufficientSampleError : public Error {
 public:
  using Error::Error;
};

/// The model lacks the structure a filter needs (e.g. FASIR without a Gaussian transition).
class UnsupportedModelError : public Error {
 public:
  using Error::Error;
};

/// User supplied configuration is invalid.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A filter failed while running (degenerate swarm, -inf likelihood increment).
class FilterFailure : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace pspf

#endif  // PSPF_ERROR_HPP
