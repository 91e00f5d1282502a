// tests/test_support.hpp

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

#ifndef MFAC_TESTS_TEST_SUPPORT_HPP_
#define MFAC_TESTS_TEST_SUPPORT_HPP_

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "mfac/common.hpp"
#include "mfac/gradient_matrix.hpp"

namespace mfac::test {

inline std::filesystem::path temp_path(const std::string& stem) {
  static std::uint64_t counter = 0;
  auto dir = std::filesystem::temp_directory_path() / "mfac_tests";
  std::filesystem::create_directories(dir);
  return dir / (stem + "_" + std::to_string(counter++));
}

inline double rel_l2(const Eigen::VectorXd& got, const Eigen::VectorXd& want) {
  double denom = want.norm();
  if (denom == 0.0) return got.norm();
  return (got - want).norm() / denom;
}

inline double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

// Compensated (Kahan) mean over a group of rows, the independent oracle for
// batch averaging.
inline Eigen::VectorXd kahan_mean(const RowMatrix<double>& rows) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(rows.cols());
  Eigen::VectorXd comp = Eigen::VectorXd::Zero(rows.cols());
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    for (Eigen::Index c = 0; c < rows.cols(); ++c) {
      double y = rows(r, c) - comp[c];
      double t = sum[c] + y;
      comp[c] = (t - sum[c]) - y;
      sum[c] = t;
    }
  }
  return sum / double(rows.rows());
}

// Doolittle LU without pivoting; returns U. Independent route to the dynamic
// sketch's D matrix: D = triu(LU(lambda^-1 G G^T + m I)) - m I.
inline Eigen::MatrixXd lu_nopivot_u(Eigen::MatrixXd a) {
  const Eigen::Index n = a.rows();
  for (Eigen::Index k = 0; k < n; ++k) {
    for (Eigen::Index i = k + 1; i < n; ++i) {
      const double f = a(i, k) / a(k, k);
      a.row(i).segment(k, n - k) -= f * a.row(k).segment(k, n - k);
      a(i, k) = 0.0;
    }
  }
  return a.triangularView<Eigen::Upper>();
}

inline std::mt19937_64 rng_for(std::uint64_t seed) {
  return std::mt19937_64(seed);
}

// Log-uniform integer in [lo, hi], biased toward small sizes the same way
// across suites.
inline std::size_t log_uniform(std::mt19937_64& rng, std::size_t lo,
                               std::size_t hi) {
  std::uniform_real_distribution<double> u(std::log(double(lo)),
                                           std::log(double(hi) + 1.0));
  auto v = static_cast<std::size_t>(std::exp(u(rng)));
  if (v < lo) v = lo;
  if (v > hi) v = hi;
  return v;
}

}  // namespace mfac::test

#endif  // MFAC_TESTS_TEST_SUPPORT_HPP_
