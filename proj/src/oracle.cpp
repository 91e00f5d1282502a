// mfac/oracle.cpp

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

#include "mfac/oracle.hpp"

#include <Eigen/Cholesky>

namespace mfac::oracle {

namespace {

void check_instance(const GradientMatrix<double>& g, double lambda) {
  if (g.rows() < 1) throw ValidationError("oracle: empty gradient window");
  if (g.dim() < 1) throw ValidationError("oracle: zero-dimensional gradients");
  if (g.dim() > kMaxDenseDim)
    throw ValidationError(
        "oracle: d = " + std::to_string(g.dim()) + " exceeds the dense guard " +
        std::to_string(kMaxDenseDim) + "; reduce d for oracle checks");
  if (!(lambda > 0.0))
    throw ValidationError("oracle: lambda must be > 0");
}

}  // namespace

Eigen::MatrixXd dense_fisher(const GradientMatrix<double>& g, double lambda) {
  check_instance(g, lambda);
  const auto d = static_cast<Eigen::Index>(g.dim());
  const double inv_m = 1.0 / double(g.rows());
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(d, d);
  f.selfadjointView<Eigen::Lower>().rankUpdate(g.data().transpose(), inv_m);
  // Mirror so the returned matrix is exactly symmetric.
  f.triangularView<Eigen::StrictlyUpper>() =
      f.triangularView<Eigen::StrictlyLower>().transpose();
  f.diagonal().array() += lambda;
  return f;
}

Eigen::VectorXd fisher_apply(const GradientMatrix<double>& g, double lambda,
                             const Eigen::VectorXd& x) {
  check_instance(g, lambda);
  if (x.size() != static_cast<Eigen::Index>(g.dim()))
    throw ValidationError("oracle: vector length mismatch");
  const double inv_m = 1.0 / double(g.rows());
  Eigen::VectorXd y = lambda * x;
  for (Eigen::Index r = 0; r < g.data().rows(); ++r) {
    const double c = g.data().row(r).dot(x.transpose()) * inv_m;
    y += c * g.data().row(r).transpose();
  }
  return y;
}

Eigen::MatrixXd dense_inverse_direct(const GradientMatrix<double>& g,
                                     double lambda) {
  Eigen::MatrixXd f = dense_fisher(g, lambda);
  Eigen::LLT<Eigen::MatrixXd> llt(f);
  if (llt.info() != Eigen::Success)
    throw ValidationError("oracle: dampened Fisher is not positive definite");
  return llt.solve(Eigen::MatrixXd::Identity(f.rows(), f.cols()));
}

Eigen::MatrixXd dense_inverse_woodbury(const GradientMatrix<double>& g,
                                       double lambda) {
  check_instance(g, lambda);
  const auto d = static_cast<Eigen::Index>(g.dim());
  const double m = double(g.rows());
  Eigen::MatrixXd h =
      Eigen::MatrixXd::Identity(d, d) * (1.0 / lambda);
  Eigen::VectorXd w(d);
  for (Eigen::Index r = 0; r < g.data().rows(); ++r) {
    const Eigen::VectorXd gi = g.data().row(r).transpose();
    w.noalias() = h.selfadjointView<Eigen::Lower>() * gi;
    const double denom = m + gi.dot(w);
    if (!(denom >= m * (1.0 - kDenomTol)))
      throw ValidationError("oracle: curvature denominator collapsed at row " +
                            std::to_string(r));
    // Lower triangle only; w_i * w_j is commutative so the mirror is exact.
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j <= i; ++j)
        h(i, j) -= (w[i] * w[j]) / denom;
  }
  h.triangularView<Eigen::StrictlyUpper>() =
      h.triangularView<Eigen::StrictlyLower>().transpose();
  return h;
}

Eigen::MatrixXd dense_inverse_woodbury_hp(const GradientMatrix<double>& g,
                                          double lambda) {
  check_instance(g, lambda);
  using MatrixXld =
      Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  using VectorXld = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
  const auto d = static_cast<Eigen::Index>(g.dim());
  const long double m = static_cast<long double>(g.rows());
  MatrixXld h = MatrixXld::Identity(d, d) * (1.0L / (long double)(lambda));
  VectorXld w(d);
  for (Eigen::Index r = 0; r < g.data().rows(); ++r) {
    const VectorXld gi = g.data().row(r).transpose().cast<long double>();
    w.noalias() = h.selfadjointView<Eigen::Lower>() * gi;
    const long double denom = m + gi.dot(w);
    if (!(denom >= m * (1.0L - (long double)(kDenomTol))))
      throw ValidationError("oracle: curvature denominator collapsed at row " +
                            std::to_string(r));
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j <= i; ++j)
        h(i, j) -= (w[i] * w[j]) / denom;
  }
  h.triangularView<Eigen::StrictlyUpper>() =
      h.triangularView<Eigen::StrictlyLower>().transpose();
  return h.cast<double>();
}

Eigen::VectorXd dense_ihvp(const Eigen::MatrixXd& inverse,
                           const Eigen::VectorXd& x) {
  if (inverse.rows() != inverse.cols() || inverse.rows() != x.size())
    throw ValidationError("oracle: inverse/vector shape mismatch");
  return inverse.selfadjointView<Eigen::Lower>() * x;
}

}  // namespace mfac::oracle
