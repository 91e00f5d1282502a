// mfac/optimizer.hpp

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

#ifndef MFAC_OPTIMIZER_HPP_
#define MFAC_OPTIMIZER_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "mfac/config.hpp"
#include "mfac/dynamic_sketch.hpp"
#include "mfac/gradient_matrix.hpp"

namespace mfac::optimizer {

// How steps behave while the window is still filling.
enum class WarmupMode {
  passthrough,     // direction = grad / lambda, coefficients stay deferred
  partial_window,  // preconditions with the partial window from step one
};

struct OptimizerConfig {
  FisherConfig fisher;  // full-width: block_size must be 0
  double lr = 1e-3;
  std::function<double(std::uint64_t)> lr_schedule;  // overrides lr when set
  WarmupMode warmup = WarmupMode::passthrough;
  std::size_t update_stride = 1;  // window absorbs every k-th gradient
  double weight_decay = 0.0;

  void validate() const;
};

struct OptimizerState {
  Eigen::VectorXd theta;
  DynamicSketch<double> sketch;
  std::uint64_t step = 0;
  OptimizerConfig cfg;
  IhvpWork<double> work;
};

OptimizerState make_optimizer(Eigen::VectorXd theta0, OptimizerConfig cfg);

// One preconditioned descent step: theta -= eta * Finv(grad + wd * theta).
// Off-stride steps reuse the window without mutating it. Returns the raw
// direction (before the learning-rate scale).
Eigen::VectorXd optimizer_step(OptimizerState& s, const Eigen::VectorXd& grad);

struct TraceRow {
  std::uint64_t step = 0;
  double loss = 0.0;       // evaluated before the step
  double grad_norm = 0.0;  // likewise
  std::int64_t step_time_ns = 0;
};

struct StepProvider {
  std::function<double(const Eigen::VectorXd&)> loss;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, std::uint64_t)> grad;
};

std::vector<TraceRow> run_training(OptimizerState& s, const StepProvider& p,
                                   std::size_t steps);

// CSV: step, loss, grad_norm, and optionally step_time_ns. Values round-trip
// exactly; timings are wall-clock and vary run to run, so byte-stable
// reports leave them out.
void write_trace_csv(const std::filesystem::path& p,
                     const std::vector<TraceRow>& rows,
                     bool with_timings = true);

// Agreement probe for the dynamic estimator: cosine between its IHVP and one
// from a fresh static window, next to the cosine between two fresh static
// windows as the noise floor.
struct CosineProbe {
  double dyn_static = 0.0;
  double static_static = 0.0;
};

CosineProbe cosine_similarity_probe(const DynamicSketch<double>& dyn,
                                    const GradientMatrix<double>& fresh_a,
                                    const GradientMatrix<double>& fresh_b,
                                    const Eigen::VectorXd& query);

}  // namespace mfac::optimizer

#endif  // MFAC_OPTIMIZER_HPP_
