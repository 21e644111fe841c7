// Copyright 2026 The deepgmm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DEEPGMM_ERRORS_HPP_
#define DEEPGMM_ERRORS_HPP_

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace deepgmm {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes of inputs do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Argument outside its documented domain (bad name, non-positive size, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A symmetric system could not be solved reliably. Carries the estimated
// 1-norm condition number.
class SingularSystemError : public Error {
 public:
  SingularSystemError(const std::string& what, double condition_estimate)
      : Error(what), condition_estimate_(condition_estimate) {}
  double condition_estimate() const { return condition_estimate_; }

 private:
  double condition_estimate_;
};

// A NaN or infinity appeared where finite values are required. Used as the
// divergence signal by the training loops.
class NonFiniteError : public Error {
 public:
  NonFiniteError(const std::string& what, std::int64_t step)
      : Error(what), step_(step) {}
  std::int64_t step() const { return step_; }

 private:
  std::int64_t step_;
};

// Filesystem or parse failure when reading/writing artifacts.
class IoError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require_same_length(long a, long b, const char* what) {
  if (a != b) {
    std::ostringstream os;
    os << what << ": length mismatch (" << a << " vs " << b << ")";
    throw ShapeError(os.str());
  }
}

}  // namespace detail
}  // namespace deepgmm

#endif  // DEEPGMM_ERRORS_HPP_
