// mfac/synth.hpp

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

#ifndef MFAC_SYNTH_HPP_
#define MFAC_SYNTH_HPP_

#include <cstdint>
#include <string>

#include "mfac/gradient_matrix.hpp"

namespace mfac::synth {

enum class GradKind {
  normal,   // entries i.i.d. N(0,1) / sqrt(d); rows have unit norm on average
  lowrank,  // rows concentrate on `rank` shared directions plus small noise
};

GradKind parse_grad_kind(const std::string& name);  // "normal" | "lowrank"

struct GenSpec {
  std::size_t d = 0;
  std::size_t m = 0;
  std::uint64_t seed = 0;
  GradKind kind = GradKind::normal;
  std::size_t rank = 0;  // lowrank only; 0 picks max(1, m/8)
};

// Deterministic for a fixed seed on a fixed toolchain. f32 output is the f64
// draw rounded once, so both dtypes describe the same instance.
GradientMatrix<double> generate_gradients(const GenSpec& spec);
GradientMatrix<float> generate_gradients_f32(const GenSpec& spec);

// Weights ~ N(0,1), for pruning drills.
Eigen::VectorXd generate_weights(std::size_t d, std::uint64_t seed);

// Deterministic probe vectors for verification sweeps.
Eigen::VectorXd generate_vector(std::size_t d, std::uint64_t seed);

}  // namespace mfac::synth

#endif  // MFAC_SYNTH_HPP_
