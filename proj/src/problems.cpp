// mfac/problems.cpp

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

#include "mfac/problems.hpp"

#include <cmath>
#include <random>
#include <string>

#include "mfac/synth.hpp"

namespace mfac::problems {

namespace {

// log(1 + e^u) without overflow.
double softplus(double u) {
  return std::max(u, 0.0) + std::log1p(std::exp(-std::abs(u)));
}

double sigmoid(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

void check_theta(const Eigen::VectorXd& theta, std::size_t d,
                 const char* who) {
  if (theta.size() != Eigen::Index(d))
    throw ValidationError(std::string(who) + ": parameter length " +
                          std::to_string(theta.size()) + " != dim " +
                          std::to_string(d));
  if (!theta.allFinite())
    throw ValidationError(std::string(who) + ": non-finite parameters");
}

}  // namespace

QuadraticProblem::QuadraticProblem(RowMatrix<double> a) : a_(std::move(a)) {
  if (a_.rows() < 1 || a_.cols() < 1)
    throw ValidationError("quadratic problem: empty data matrix");
  if (!a_.allFinite())
    throw ValidationError("quadratic problem: non-finite data");
}

QuadraticProblem QuadraticProblem::synthetic(std::size_t d, std::size_t n,
                                             std::uint64_t seed) {
  synth::GenSpec spec;
  spec.d = d;
  spec.m = n;
  spec.seed = seed;
  return QuadraticProblem(synth::generate_gradients(spec).data());
}

double QuadraticProblem::loss(const Eigen::VectorXd& theta) const {
  check_theta(theta, dim(), "quadratic loss");
  return 0.5 * (a_ * theta).squaredNorm() / double(samples());
}

Eigen::VectorXd QuadraticProblem::grad(const Eigen::VectorXd& theta) const {
  check_theta(theta, dim(), "quadratic grad");
  return a_.transpose() * (a_ * theta) / double(samples());
}

Eigen::VectorXd QuadraticProblem::sample_grad(
    std::size_t i, const Eigen::VectorXd& theta) const {
  if (i >= samples())
    throw ValidationError("quadratic grad: sample index out of range");
  check_theta(theta, dim(), "quadratic grad");
  const auto row = a_.row(Eigen::Index(i));
  return row.transpose() * row.dot(theta.transpose());
}

GradientMatrix<double> QuadraticProblem::window(const Eigen::VectorXd& theta,
                                                std::size_t m,
                                                std::uint64_t seed) const {
  check_theta(theta, dim(), "quadratic window");
  if (m < 1) throw ValidationError("quadratic window: m must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, samples() - 1);
  GradientMatrix<double> g(m, dim());
  for (std::size_t r = 0; r < m; ++r)
    g.data().row(Eigen::Index(r)) = sample_grad(pick(rng), theta).transpose();
  return g;
}

LogisticProblem::LogisticProblem(RowMatrix<double> x, Eigen::VectorXd y,
                                 double reg)
    : x_(std::move(x)), y_(std::move(y)), reg_(reg) {
  if (x_.rows() < 1 || x_.cols() < 1)
    throw ValidationError("logistic problem: empty data matrix");
  if (y_.size() != x_.rows())
    throw ValidationError("logistic problem: label count mismatch");
  if (!x_.allFinite() || !y_.allFinite())
    throw ValidationError("logistic problem: non-finite data");
  for (Eigen::Index i = 0; i < y_.size(); ++i)
    if (y_[i] != 1.0 && y_[i] != -1.0)
      throw ValidationError("logistic problem: labels must be +1 or -1");
  if (!(reg_ >= 0.0) || !std::isfinite(reg_))
    throw ValidationError("logistic problem: regularization must be >= 0");
}

LogisticProblem LogisticProblem::synthetic(std::size_t d, std::size_t n,
                                           double margin, std::uint64_t seed) {
  synth::GenSpec spec;
  spec.d = d;
  spec.m = n;
  spec.seed = seed;
  RowMatrix<double> x = synth::generate_gradients(spec).data();
  Eigen::VectorXd w = synth::generate_vector(d, seed ^ 0x9e3779b97f4a7c15ull);
  w.normalize();
  Eigen::VectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double z = x.row(Eigen::Index(i)).dot(w.transpose());
    y[Eigen::Index(i)] = z >= 0.0 ? 1.0 : -1.0;
    // Shift along the separator so every margin y_i x_i.w is >= `margin`.
    x.row(Eigen::Index(i)) += margin * y[Eigen::Index(i)] * w.transpose();
  }
  return LogisticProblem(std::move(x), std::move(y), 1e-3);
}

double LogisticProblem::loss(const Eigen::VectorXd& theta) const {
  check_theta(theta, dim(), "logistic loss");
  const Eigen::VectorXd z = x_ * theta;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i)
    acc += softplus(-y_[i] * z[i]);
  return acc / double(samples()) + 0.5 * reg_ * theta.squaredNorm();
}

Eigen::VectorXd LogisticProblem::grad(const Eigen::VectorXd& theta) const {
  check_theta(theta, dim(), "logistic grad");
  const Eigen::VectorXd z = x_ * theta;
  Eigen::VectorXd g = reg_ * theta;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double w = -y_[i] * sigmoid(-y_[i] * z[i]) / double(samples());
    g += w * x_.row(i).transpose();
  }
  return g;
}

Eigen::VectorXd LogisticProblem::sample_grad(
    std::size_t i, const Eigen::VectorXd& theta) const {
  if (i >= samples())
    throw ValidationError("logistic grad: sample index out of range");
  check_theta(theta, dim(), "logistic grad");
  const double z = x_.row(Eigen::Index(i)).dot(theta.transpose());
  const double yi = y_[Eigen::Index(i)];
  return -yi * sigmoid(-yi * z) * x_.row(Eigen::Index(i)).transpose() +
         reg_ * theta;
}

GradientMatrix<double> LogisticProblem::window(const Eigen::VectorXd& theta,
                                               std::size_t m, std::size_t batch,
                                               std::uint64_t seed) const {
  check_theta(theta, dim(), "logistic window");
  if (m < 1 || batch < 1)
    throw ValidationError("logistic window: m and batch must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, samples() - 1);
  GradientMatrix<double> g(m, dim());
  for (std::size_t r = 0; r < m; ++r) {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(Eigen::Index(dim()));
    for (std::size_t b = 0; b < batch; ++b)
      row += sample_grad(pick(rng), theta);
    g.data().row(Eigen::Index(r)) = row.transpose() / double(batch);
  }
  return g;
}

}  // namespace mfac::problems
