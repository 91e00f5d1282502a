// mfac/common.hpp

// Copyright 2026  The mfac authors

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

#ifndef MFAC_COMMON_HPP_
#define MFAC_COMMON_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>
#include <type_traits>

#include <Eigen/Core>

namespace mfac {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad shapes, non-finite data, guard violations, out-of-range arguments.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Unreadable, truncated or malformed files.
class IoError : public Error {
 public:
  using Error::Error;
};

// Curvature denominators (q_i, m + D_ii) must stay above m * (1 - kDenomTol).
// The comparison is written negated where used so that NaN also rejects.
inline constexpr double kDenomTol = 1e-12;

// Parallelism cap: MFAC_THREADS if set and positive, otherwise the hardware
// concurrency (at least 1).
std::size_t max_threads();

// Setup recursions and element queries accumulate one precision level above
// the storage type; inverse entries scale as 1/lambda, so entrywise absolute
// accuracy requires the stored state to be nearly correctly rounded.
template <typename T>
using AccumT = std::conditional_t<std::is_same_v<T, float>, double, long double>;

namespace detail {

// Order-deterministic kernels for the recursions that must produce the same
// bit pattern regardless of where the operands live (sketch storage, page
// buffer, caller-supplied row). Four independent lanes pipeline the FP adds;
// the grouping depends only on n, never on alignment, so results are
// reproducible across call sites. The build never enables -ffast-math, so
// the compiler cannot reassociate these reductions.
template <typename T>
inline T dot(const T* a, const T* b, std::size_t n) {
  T s0 = T(0), s1 = T(0), s2 = T(0), s3 = T(0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

// Same lane structure for the setup recursion, where `a` is a scratch row
// already held in the extended accumulator; the caller rounds the result.
template <typename A, typename T>
inline A dot_mixed(const A* a, const T* b, std::size_t n) {
  A s0 = A(0), s1 = A(0), s2 = A(0), s3 = A(0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * A(b[i]);
    s1 += a[i + 1] * A(b[i + 1]);
    s2 += a[i + 2] * A(b[i + 2]);
    s3 += a[i + 3] * A(b[i + 3]);
  }
  for (; i < n; ++i) s0 += a[i] * A(b[i]);
  return (s0 + s1) + (s2 + s3);
}

// y += alpha * x. Elementwise, so ordinary vectorization keeps determinism.
template <typename T>
inline void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
inline void check_denominator(T q, T m, std::size_t index,
                              const char* where) {
  // Negated so NaN rejects too. Denominators are m plus a nonnegative
  // curvature term up to rounding, hence the one-sided guard below m.
  if (!(q >= m * (T(1) - T(kDenomTol))))
    throw ValidationError(std::string(where) +
                          ": curvature denominator q[" +
                          std::to_string(index) + "] = " + std::to_string(q) +
                          " collapsed below the window size");
}

}  // namespace detail

}  // namespace mfac

#endif  // MFAC_COMMON_HPP_
