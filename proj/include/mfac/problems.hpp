// mfac/problems.hpp

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

#ifndef MFAC_PROBLEMS_HPP_
#define MFAC_PROBLEMS_HPP_

#include <cstdint>

#include "mfac/gradient_matrix.hpp"

namespace mfac::problems {

// Desk-scale losses with exact per-sample gradients. Both classes are pure
// given (theta, seed) so training traces and prune providers stay
// deterministic.

// l_i(theta) = 0.5 (a_i . theta)^2, full loss averaged over rows.
class QuadraticProblem {
 public:
  explicit QuadraticProblem(RowMatrix<double> a);
  static QuadraticProblem synthetic(std::size_t d, std::size_t n,
                                    std::uint64_t seed);

  std::size_t dim() const { return std::size_t(a_.cols()); }
  std::size_t samples() const { return std::size_t(a_.rows()); }
  const RowMatrix<double>& data() const { return a_; }

  double loss(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd grad(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd sample_grad(std::size_t i, const Eigen::VectorXd& theta) const;

  // m per-sample gradients at theta, rows drawn uniformly with replacement.
  GradientMatrix<double> window(const Eigen::VectorXd& theta, std::size_t m,
                                std::uint64_t seed) const;

 private:
  RowMatrix<double> a_;
};

// l_i(theta) = softplus(-y_i x_i . theta) + 0.5 reg ||theta||^2 with labels
// y_i in {-1, +1}; reg > 0 makes the optimum unique.
class LogisticProblem {
 public:
  LogisticProblem(RowMatrix<double> x, Eigen::VectorXd y, double reg);
  static LogisticProblem synthetic(std::size_t d, std::size_t n, double margin,
                                   std::uint64_t seed);

  std::size_t dim() const { return std::size_t(x_.cols()); }
  std::size_t samples() const { return std::size_t(x_.rows()); }
  const RowMatrix<double>& data() const { return x_; }
  const Eigen::VectorXd& labels() const { return y_; }
  double regularization() const { return reg_; }

  double loss(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd grad(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd sample_grad(std::size_t i, const Eigen::VectorXd& theta) const;

  // m window rows, each the average of `batch` sampled per-sample gradients;
  // batched rows stand in for single samples to reduce variance.
  GradientMatrix<double> window(const Eigen::VectorXd& theta, std::size_t m,
                                std::size_t batch, std::uint64_t seed) const;

 private:
  RowMatrix<double> x_;
  Eigen::VectorXd y_;
  double reg_ = 0.0;
};

// Fixed-rate gradient descent, the slow-but-sure reference optimizer.
template <typename Problem>
Eigen::VectorXd gd_minimize(const Problem& p, Eigen::VectorXd theta, double lr,
                            std::size_t iters) {
  for (std::size_t i = 0; i < iters; ++i) theta -= lr * p.grad(theta);
  return theta;
}

}  // namespace mfac::problems

#endif  // MFAC_PROBLEMS_HPP_
