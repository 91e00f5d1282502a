// mfac/synth.cpp

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

#include "mfac/synth.hpp"

#include <cmath>
#include <random>

namespace mfac::synth {

GradKind parse_grad_kind(const std::string& name) {
  if (name == "normal") return GradKind::normal;
  if (name == "lowrank") return GradKind::lowrank;
  throw ValidationError("unknown gradient kind '" + name +
                        "' (expected normal or lowrank)");
}

GradientMatrix<double> generate_gradients(const GenSpec& spec) {
  if (spec.d < 1 || spec.m < 1)
    throw ValidationError("generator: d and m must be >= 1");
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double inv_sqrt_d = 1.0 / std::sqrt(double(spec.d));
  GradientMatrix<double> g(spec.m, spec.d);

  if (spec.kind == GradKind::normal) {
    for (std::size_t r = 0; r < spec.m; ++r)
      for (std::size_t c = 0; c < spec.d; ++c)
        g.data()(Eigen::Index(r), Eigen::Index(c)) = gauss(rng) * inv_sqrt_d;
    return g;
  }

  const std::size_t rank =
      spec.rank > 0 ? spec.rank : std::max<std::size_t>(1, spec.m / 8);
  RowMatrix<double> basis(Eigen::Index(rank), Eigen::Index(spec.d));
  for (Eigen::Index r = 0; r < basis.rows(); ++r)
    for (Eigen::Index c = 0; c < basis.cols(); ++c)
      basis(r, c) = gauss(rng) * inv_sqrt_d;
  const double inv_sqrt_rank = 1.0 / std::sqrt(double(rank));
  for (std::size_t r = 0; r < spec.m; ++r) {
    Eigen::VectorXd coeff(static_cast<Eigen::Index>(rank));
    for (Eigen::Index k = 0; k < coeff.size(); ++k) coeff[k] = gauss(rng);
    g.data().row(Eigen::Index(r)) =
        (coeff.transpose() * basis) * inv_sqrt_rank;
    for (std::size_t c = 0; c < spec.d; ++c)
      g.data()(Eigen::Index(r), Eigen::Index(c)) +=
          0.01 * gauss(rng) * inv_sqrt_d;
  }
  return g;
}

GradientMatrix<float> generate_gradients_f32(const GenSpec& spec) {
  GradientMatrix<double> g = generate_gradients(spec);
  GradientMatrix<float> out(g.data().cast<float>());
  return out;
}

Eigen::VectorXd generate_weights(std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd w(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = gauss(rng);
  return w;
}

Eigen::VectorXd generate_vector(std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0xd1b54a32d192ed03ull);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd v(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = gauss(rng);
  return v;
}

}  // namespace mfac::synth
