// mfac/oracle.hpp

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

#ifndef MFAC_ORACLE_HPP_
#define MFAC_ORACLE_HPP_

#include "mfac/config.hpp"
#include "mfac/gradient_matrix.hpp"

namespace mfac::oracle {

// Dense reference implementations, f64 only, for verification at desk scale.
// All take the window G (one gradient per row) and the dampening lambda; the
// Fisher scale is the row count, so a partial window is checked by passing
// just its occupied prefix.
inline constexpr std::size_t kMaxDenseDim = 4096;

// F = lambda * I + (1/m) G^T G, exactly symmetric by construction.
Eigen::MatrixXd dense_fisher(const GradientMatrix<double>& g, double lambda);

// F x without materializing F: lambda x + (1/m) sum_i g_i (g_i . x).
Eigen::VectorXd fisher_apply(const GradientMatrix<double>& g, double lambda,
                             const Eigen::VectorXd& x);

// F^-1 via Cholesky of the materialized F.
Eigen::MatrixXd dense_inverse_direct(const GradientMatrix<double>& g,
                                     double lambda);

// F^-1 via m rank-one inverse updates:
//   H_0 = lambda^-1 I,  H_i = H_{i-1} - (w w^T) / (m + g_i . w),
//   w = H_{i-1} g_i.
// H stays exactly symmetric (lower triangle computed, mirrored).
Eigen::MatrixXd dense_inverse_woodbury(const GradientMatrix<double>& g,
                                       double lambda);

// Same recursion with the accumulator held in extended precision, for
// entrywise absolute comparisons where the reference's own f64 drift would
// dominate the tolerance.
Eigen::MatrixXd dense_inverse_woodbury_hp(const GradientMatrix<double>& g,
                                          double lambda);

Eigen::VectorXd dense_ihvp(const Eigen::MatrixXd& inverse,
                           const Eigen::VectorXd& x);

}  // namespace mfac::oracle

#endif  // MFAC_ORACLE_HPP_
