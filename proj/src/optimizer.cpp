// mfac/optimizer.cpp

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

#include "mfac/optimizer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "mfac/io.hpp"
#include "mfac/static_sketch.hpp"

namespace mfac::optimizer {

void OptimizerConfig::validate() const {
  fisher.validate();
  if (fisher.block_size != 0)
    throw ValidationError(
        "optimizer: the training sketch is full-width; set block_size to 0");
  if (fisher.dtype != DType::f64)
    throw ValidationError("optimizer: training runs in f64");
  if (!lr_schedule && !(std::isfinite(lr) && lr > 0.0))
    throw ValidationError(
        "optimizer: learning rate must be finite and positive");
  if (update_stride == 0)
    throw ValidationError("optimizer: update_stride must be at least 1");
  if (!(std::isfinite(weight_decay) && weight_decay >= 0.0))
    throw ValidationError(
        "optimizer: weight decay must be finite and nonnegative");
}

OptimizerState make_optimizer(Eigen::VectorXd theta0, OptimizerConfig cfg) {
  cfg.validate();
  if (std::size_t(theta0.size()) != cfg.fisher.dim)
    throw ValidationError("optimizer: parameter length " +
                          std::to_string(theta0.size()) + " != dim " +
                          std::to_string(cfg.fisher.dim));
  if (!theta0.allFinite())
    throw ValidationError("optimizer: parameters are not finite");
  OptimizerState s;
  s.theta = std::move(theta0);
  s.sketch = DynamicSketch<double>(cfg.fisher);
  s.cfg = std::move(cfg);
  return s;
}

Eigen::VectorXd optimizer_step(OptimizerState& s, const Eigen::VectorXd& grad) {
  const std::uint64_t step = s.step;
  auto fail = [step](const std::string& what) {
    throw ValidationError("optimizer step " + std::to_string(step) + ": " +
                          what);
  };
  if (s.sketch.capacity() == 0) fail("state is not initialized");
  if (std::size_t(grad.size()) != s.sketch.dim())
    fail("gradient length mismatch");
  if (!grad.allFinite()) fail("gradient has non-finite entries");
  const double eta = s.cfg.lr_schedule ? s.cfg.lr_schedule(step) : s.cfg.lr;
  if (!std::isfinite(eta) || eta < 0.0)
    fail("learning rate " + std::to_string(eta) +
         " is not finite and nonnegative");

  Eigen::VectorXd g_eff = grad;
  if (s.cfg.weight_decay != 0.0) g_eff += s.cfg.weight_decay * s.theta;

  Eigen::VectorXd dir;
  if (s.sketch.filled() < s.sketch.capacity()) {
    if (s.cfg.warmup == WarmupMode::passthrough) {
      s.sketch.push(g_eff, /*refresh_coeffs=*/false);
      dir = (1.0 / s.cfg.fisher.lambda) * g_eff;
    } else {
      dir = s.sketch.update_and_ihvp(g_eff, &s.work);
    }
  } else if (step % s.cfg.update_stride == 0) {
    dir = s.sketch.update_and_ihvp(g_eff, &s.work);
  } else {
    // Passthrough warmup defers the coefficients; settle them once before
    // the first read-only step.
    if (!s.sketch.coeffs_current()) s.sketch.refresh();
    dir = s.sketch.ihvp(g_eff, &s.work);
  }

  s.theta -= eta * dir;
  if (!s.theta.allFinite()) fail("produced non-finite parameters");
  ++s.step;
  return dir;
}

std::vector<TraceRow> run_training(OptimizerState& s, const StepProvider& p,
                                   std::size_t steps) {
  if (!p.loss || !p.grad)
    throw ValidationError("training: missing loss or gradient provider");
  std::vector<TraceRow> rows;
  rows.reserve(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    TraceRow row;
    row.step = s.step;
    row.loss = p.loss(s.theta);
    const Eigen::VectorXd g = p.grad(s.theta, s.step);
    row.grad_norm = g.norm();
    const auto t0 = std::chrono::steady_clock::now();
    optimizer_step(s, g);
    const auto t1 = std::chrono::steady_clock::now();
    row.step_time_ns =
        std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count();
    rows.push_back(row);
  }
  return rows;
}

void write_trace_csv(const std::filesystem::path& p,
                     const std::vector<TraceRow>& rows, bool with_timings) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot open " + p.string() + " for writing");
  out << (with_timings ? "step,loss,grad_norm,step_time_ns\n"
                       : "step,loss,grad_norm\n");
  for (const TraceRow& r : rows) {
    out << r.step << ',' << io::csv_double(r.loss) << ','
        << io::csv_double(r.grad_norm);
    if (with_timings) out << ',' << r.step_time_ns;
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + p.string());
}

namespace {

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0))
    throw ValidationError("cosine probe: zero-norm direction");
  return a.dot(b) / (na * nb);
}

}  // namespace

CosineProbe cosine_similarity_probe(const DynamicSketch<double>& dyn,
                                    const GradientMatrix<double>& fresh_a,
                                    const GradientMatrix<double>& fresh_b,
                                    const Eigen::VectorXd& query) {
  if (dyn.capacity() == 0)
    throw ValidationError("cosine probe: sketch is not initialized");
  const std::size_t d = dyn.dim();
  if (fresh_a.dim() != d || fresh_b.dim() != d)
    throw ValidationError("cosine probe: window dim mismatch");
  if (std::size_t(query.size()) != d)
    throw ValidationError("cosine probe: query length mismatch");
  if (!query.allFinite() || !(query.norm() > 0.0))
    throw ValidationError("cosine probe: query must be finite and nonzero");

  FisherConfig ca = dyn.config();
  ca.block_size = 0;
  ca.m = fresh_a.rows();
  FisherConfig cb = ca;
  cb.m = fresh_b.rows();
  const auto sa = StaticSketch<double>::setup(fresh_a, ca);
  const auto sb = StaticSketch<double>::setup(fresh_b, cb);

  const Eigen::VectorXd yd = dyn.ihvp(query);
  const Eigen::VectorXd ya = sa.ihvp(query);
  const Eigen::VectorXd yb = sb.ihvp(query);
  CosineProbe out;
  out.dyn_static = cosine(yd, ya);
  out.static_static = cosine(ya, yb);
  return out;
}

}  // namespace mfac::optimizer
