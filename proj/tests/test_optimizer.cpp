// mfac/tests/test_optimizer.cpp

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

#include <doctest.h>

#include <fstream>
#include <sstream>

#include "mfac/oracle.hpp"
#include "mfac/problems.hpp"
#include "mfac/synth.hpp"
#include "test_support.hpp"

using namespace mfac;
using namespace mfac::optimizer;

namespace {

GradientMatrix<double> window_of(std::size_t d, std::size_t m,
                                 std::uint64_t seed) {
  synth::GenSpec spec;
  spec.d = d;
  spec.m = m;
  spec.seed = seed;
  return synth::generate_gradients(spec);
}

OptimizerConfig config_of(std::size_t d, std::size_t m, double lambda,
                          double lr) {
  OptimizerConfig cfg;
  cfg.fisher.dim = d;
  cfg.fisher.m = m;
  cfg.fisher.lambda = lambda;
  cfg.lr = lr;
  return cfg;
}

// Central difference reference for the toy problems.
template <typename Problem>
Eigen::VectorXd fd_grad(const Problem& p, const Eigen::VectorXd& theta,
                        double h) {
  Eigen::VectorXd g(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Eigen::VectorXd up = theta, dn = theta;
    up[i] += h;
    dn[i] -= h;
    g[i] = (p.loss(up) - p.loss(dn)) / (2.0 * h);
  }
  return g;
}

}  // namespace

TEST_SUITE("optimizer") {

// The toy problems feed both the prune provider and the trainer; pin their
// gradients to finite differences before using them as references.
TEST_CASE("toy problem gradients match finite differences") {
  const auto quad = problems::QuadraticProblem::synthetic(6, 30, 71);
  const Eigen::VectorXd tq = synth::generate_vector(6, 72);
  CHECK(test::rel_l2(quad.grad(tq), fd_grad(quad, tq, 1e-6)) <= 1e-7);

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(6);
  for (std::size_t i = 0; i < quad.samples(); ++i)
    mean += quad.sample_grad(i, tq);
  mean /= double(quad.samples());
  CHECK(test::rel_l2(mean, quad.grad(tq)) <= 1e-12);

  const auto logi = problems::LogisticProblem::synthetic(5, 40, 1.0, 73);
  const Eigen::VectorXd tl = synth::generate_vector(5, 74);
  CHECK(test::rel_l2(logi.grad(tl), fd_grad(logi, tl, 1e-6)) <= 1e-6);
  CHECK(logi.regularization() > 0.0);
  for (Eigen::Index i = 0; i < logi.labels().size(); ++i)
    CHECK(std::abs(logi.labels()[i]) == 1.0);
}

TEST_CASE("toy problem windows are deterministic and well-shaped") {
  const auto quad = problems::QuadraticProblem::synthetic(7, 25, 81);
  const Eigen::VectorXd t = synth::generate_vector(7, 82);
  const auto w1 = quad.window(t, 4, 83);
  const auto w2 = quad.window(t, 4, 83);
  CHECK(w1.rows() == 4);
  CHECK(w1.dim() == 7);
  CHECK(test::max_abs_diff(w1.data(), w2.data()) == 0.0);
  CHECK(test::max_abs_diff(w1.data(), quad.window(t, 4, 84).data()) != 0.0);

  const auto logi = problems::LogisticProblem::synthetic(5, 30, 0.5, 85);
  const auto lw = logi.window(t.head(5), 3, 8, 86);
  CHECK(lw.rows() == 3);
  CHECK(lw.dim() == 5);
  CHECK(lw.data().allFinite());

  // The reference descent loop reduces the loss.
  const Eigen::VectorXd t2 =
      problems::gd_minimize(quad, t, 0.1, 50);
  CHECK(quad.loss(t2) < quad.loss(t));
}

// [DERIVED] With theta = Finv g and a step that reinserts g into its own
// slot, one unit-rate step lands at the origin.
TEST_CASE("newton step recovers the dense solve") {
  const std::size_t d = 24, m = 6;
  const double lambda = 0.3;
  const auto g = window_of(d, m, 41);
  auto cfg = config_of(d, m, lambda, 1.0);
  const Eigen::MatrixXd hinv = oracle::dense_inverse_direct(g, lambda);
  const Eigen::VectorXd g0 = g.data().row(0).transpose();
  auto state = make_optimizer(hinv * g0, cfg);
  state.sketch = DynamicSketch<double>::setup(g, cfg.fisher);
  REQUIRE(state.sketch.window_state().next_slot == 0);

  const double before = state.theta.norm();
  optimizer_step(state, g0);
  CHECK(state.theta.norm() <= 1e-8 * before);
  CHECK(state.step == 1);
}

TEST_CASE("zero gradient leaves parameters untouched but rotates the window") {
  const std::size_t d = 8, m = 3;
  auto cfg = config_of(d, m, 0.5, 0.1);
  auto state = make_optimizer(synth::generate_vector(d, 51), cfg);
  state.sketch = DynamicSketch<double>::setup(window_of(d, m, 52), cfg.fisher);
  const Eigen::VectorXd theta0 = state.theta;

  const Eigen::VectorXd dir =
      optimizer_step(state, Eigen::VectorXd::Zero(d));
  CHECK(dir.cwiseAbs().maxCoeff() == 0.0);
  CHECK(test::max_abs_diff(state.theta, theta0) == 0.0);
  CHECK(state.sketch.gradients().row(0).cwiseAbs().maxCoeff() == 0.0);
  CHECK(state.sketch.window_state().next_slot == 1);
}

// A window of m copies of g gives Fisher lambda I + g g^T regardless of m.
TEST_CASE("repeated-gradient window matches the rank-one dense inverse") {
  const std::size_t d = 16, m = 4;
  const double lambda = 0.2;
  auto cfg = config_of(d, m, lambda, 1.0);
  cfg.lr_schedule = [](std::uint64_t) { return 0.0; };  // freeze theta
  const Eigen::VectorXd g = synth::generate_vector(d, 61);
  auto state = make_optimizer(Eigen::VectorXd::Zero(d), cfg);

  Eigen::VectorXd dir;
  for (std::size_t k = 0; k <= m; ++k) dir = optimizer_step(state, g);

  GradientMatrix<double> copies(m, d);
  for (std::size_t r = 0; r < m; ++r) copies.data().row(Eigen::Index(r)) = g.transpose();
  const Eigen::VectorXd want = oracle::dense_inverse_direct(copies, lambda) * g;
  CHECK(test::rel_l2(dir, want) <= 1e-9);
  CHECK(state.theta.cwiseAbs().maxCoeff() == 0.0);
}

// One on-stride step is exactly replace-at-cursor followed by a query,
// including the weight-decay term.
TEST_CASE("step equals the replace plus ihvp composition bitwise") {
  const std::size_t d = 10, m = 3;
  const double lambda = 0.2, wd = 0.3, lr = 0.7;
  auto cfg = config_of(d, m, lambda, lr);
  cfg.weight_decay = wd;
  auto state = make_optimizer(synth::generate_vector(d, 91), cfg);
  state.sketch = DynamicSketch<double>::setup(window_of(d, m, 92), cfg.fisher);
  const Eigen::VectorXd theta0 = state.theta;
  const Eigen::VectorXd grad = synth::generate_vector(d, 93);

  auto mirror = state.sketch;
  Eigen::VectorXd g_eff = grad;
  g_eff += wd * theta0;
  const std::size_t r = state.sketch.window_state().next_slot;
  mirror.replace(r, g_eff);
  const Eigen::VectorXd want_dir = mirror.ihvp(g_eff);
  const Eigen::VectorXd want_theta = theta0 - lr * want_dir;

  const Eigen::VectorXd dir = optimizer_step(state, grad);
  CHECK(test::max_abs_diff(dir, want_dir) == 0.0);
  CHECK(test::max_abs_diff(state.theta, want_theta) == 0.0);
  CHECK(test::max_abs_diff(state.sketch.gradients(), mirror.gradients()) ==
        0.0);
}

TEST_CASE("training runs are deterministic") {
  const std::size_t d = 9, m = 4;
  const auto p = problems::QuadraticProblem::synthetic(d, 30, 111);
  const StepProvider prov{
      [&](const Eigen::VectorXd& t) { return p.loss(t); },
      [&](const Eigen::VectorXd& t, std::uint64_t) { return p.grad(t); }};

  auto run = [&]() {
    auto cfg = config_of(d, m, 0.5, 0.2);
    auto state = make_optimizer(synth::generate_vector(d, 112), cfg);
    auto rows = run_training(state, prov, 30);
    return std::make_pair(std::move(rows), state.theta);
  };
  const auto a = run();
  const auto b = run();
  REQUIRE(a.first.size() == b.first.size());
  for (std::size_t i = 0; i < a.first.size(); ++i) {
    CHECK(a.first[i].step == b.first[i].step);
    CHECK(a.first[i].loss == b.first[i].loss);
    CHECK(a.first[i].grad_norm == b.first[i].grad_norm);
  }
  CHECK(test::max_abs_diff(a.second, b.second) == 0.0);
}

TEST_CASE("passthrough warmup scales by the dampening only") {
  const std::size_t d = 7, m = 5;
  const double lambda = 0.25;
  auto cfg = config_of(d, m, lambda, 0.1);
  auto state = make_optimizer(Eigen::VectorXd::Zero(d), cfg);

  for (std::size_t k = 0; k < m; ++k) {
    const Eigen::VectorXd g = synth::generate_vector(d, 120 + k);
    const Eigen::VectorXd dir = optimizer_step(state, g);
    const Eigen::VectorXd want = (1.0 / lambda) * g;
    CHECK(test::max_abs_diff(dir, want) == 0.0);
    CHECK(state.sketch.filled() == k + 1);
    CHECK_FALSE(state.sketch.coeffs_current());
  }
}

// Partial-window warmup preconditions with exactly the sketch a fresh setup
// on the same rows would produce.
TEST_CASE("partial-window warmup equals fresh partial setups bitwise") {
  const std::size_t d = 7, m = 5;
  auto cfg = config_of(d, m, 0.25, 0.1);
  cfg.warmup = WarmupMode::partial_window;
  auto state = make_optimizer(Eigen::VectorXd::Zero(d), cfg);

  GradientMatrix<double> rows(m, d);
  for (std::size_t k = 0; k < m; ++k) {
    // Weight decay is zero, so the pushed row is the raw gradient.
    const Eigen::VectorXd g = synth::generate_vector(d, 130 + k);
    rows.data().row(Eigen::Index(k)) = g.transpose();
    const Eigen::VectorXd dir = optimizer_step(state, g);

    GradientMatrix<double> prefix(k + 1, d);
    prefix.data() = rows.data().topRows(Eigen::Index(k + 1));
    const auto fresh = DynamicSketch<double>::setup(prefix, cfg.fisher);
    CHECK(test::max_abs_diff(dir, fresh.ihvp(g)) == 0.0);
  }
}

TEST_CASE("off-stride steps read the window without mutating it") {
  const std::size_t d = 6, m = 4;
  auto cfg = config_of(d, m, 0.5, 0.05);
  cfg.update_stride = 3;
  auto state = make_optimizer(Eigen::VectorXd::Zero(d), cfg);

  for (std::size_t k = 0; k < m; ++k)
    optimizer_step(state, synth::generate_vector(d, 140 + k));
  REQUIRE(state.sketch.filled() == m);
  REQUIRE_FALSE(state.sketch.coeffs_current());

  // Steps 4 and 5 are off-stride: the first settles the deferred
  // coefficients, neither touches the window.
  const RowMatrix<double> before = state.sketch.gradients();
  optimizer_step(state, synth::generate_vector(d, 144));
  CHECK(state.sketch.coeffs_current());
  CHECK(test::max_abs_diff(state.sketch.gradients(), before) == 0.0);
  CHECK(state.sketch.window_state().next_slot == 0);
  optimizer_step(state, synth::generate_vector(d, 145));
  CHECK(test::max_abs_diff(state.sketch.gradients(), before) == 0.0);

  // Step 6 is on-stride and replaces the cursor slot.
  const Eigen::VectorXd g6 = synth::generate_vector(d, 146);
  optimizer_step(state, g6);
  CHECK(test::max_abs_diff(
            Eigen::MatrixXd(state.sketch.gradients().row(0)),
            Eigen::MatrixXd(g6.transpose())) == 0.0);
  CHECK(state.sketch.window_state().next_slot == 1);
}

TEST_CASE("zero-step training returns an empty trace") {
  auto cfg = config_of(4, 2, 1.0, 0.1);
  auto state = make_optimizer(Eigen::VectorXd::Ones(4), cfg);
  const StepProvider prov{
      [](const Eigen::VectorXd&) { return 0.0; },
      [](const Eigen::VectorXd&, std::uint64_t) {
        return Eigen::VectorXd::Zero(4).eval();
      }};
  const auto rows = run_training(state, prov, 0);
  CHECK(rows.empty());
  CHECK(state.step == 0);

  StepProvider missing;
  CHECK_THROWS_AS(run_training(state, missing, 1), ValidationError);
}

// Fixed small rate on the quadratic toy: the loss decreases monotonically
// once past the first step (checked on this instance).
TEST_CASE("quadratic training descends monotonically") {
  const std::size_t d = 12, m = 6;
  const auto p = problems::QuadraticProblem::synthetic(d, 50, 151);
  auto cfg = config_of(d, m, 1.0, 0.5);
  auto state = make_optimizer(synth::generate_vector(d, 152), cfg);
  const StepProvider prov{
      [&](const Eigen::VectorXd& t) { return p.loss(t); },
      [&](const Eigen::VectorXd& t, std::uint64_t) { return p.grad(t); }};

  const auto rows = run_training(state, prov, 40);
  REQUIRE(rows.size() == 40);
  for (std::size_t k = 0; k + 1 < rows.size(); ++k)
    CHECK(rows[k + 1].loss <= rows[k].loss + 1e-12);
  CHECK(rows.back().loss < rows.front().loss);
}

TEST_CASE("cosine probe agrees with itself and validates input") {
  const std::size_t d = 14, m = 5;
  auto cfg = config_of(d, m, 0.1, 0.1);
  const auto g = window_of(d, m, 161);
  auto state = make_optimizer(Eigen::VectorXd::Zero(d), cfg);
  state.sketch = DynamicSketch<double>::setup(g, cfg.fisher);
  const Eigen::VectorXd query = synth::generate_vector(d, 162);

  const auto same = cosine_similarity_probe(state.sketch, g, g, query);
  CHECK(same.dyn_static >= 1.0 - 1e-12);
  CHECK(same.dyn_static <= 1.0 + 1e-12);
  CHECK(same.static_static >= 1.0 - 1e-12);
  CHECK(same.static_static <= 1.0 + 1e-12);

  const auto other =
      cosine_similarity_probe(state.sketch, window_of(d, m, 163),
                              window_of(d, m, 164), query);
  CHECK(other.dyn_static <= 1.0 + 1e-12);
  CHECK(other.static_static <= 1.0 + 1e-12);
  CHECK(other.dyn_static >= -1.0 - 1e-12);

  CHECK_THROWS_AS(
      cosine_similarity_probe(state.sketch, g, g, Eigen::VectorXd::Zero(d)),
      ValidationError);
  CHECK_THROWS_AS(
      cosine_similarity_probe(state.sketch, g, g, Eigen::VectorXd::Ones(2)),
      ValidationError);
  CHECK_THROWS_AS(
      cosine_similarity_probe(state.sketch, window_of(d + 1, m, 165), g,
                              query),
      ValidationError);
  const DynamicSketch<double> empty;
  CHECK_THROWS_AS(cosine_similarity_probe(empty, g, g, query),
                  ValidationError);
}

TEST_CASE("step failures name the offending step") {
  auto cfg = config_of(4, 2, 1e-5, 1.0);
  auto state = make_optimizer(Eigen::VectorXd::Ones(4), cfg);

  Eigen::VectorXd bad = Eigen::VectorXd::Ones(4);
  bad[2] = std::numeric_limits<double>::quiet_NaN();
  try {
    optimizer_step(state, bad);
    CHECK(false);
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("step 0") != std::string::npos);
  }

  // Overflowing rate: the parameter check catches the non-finite result.
  state.cfg.lr = 1e308;
  try {
    optimizer_step(state, Eigen::VectorXd::Ones(4));
    CHECK(false);
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("step 0") != std::string::npos);
    CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
  }

  OptimizerState unmade;
  CHECK_THROWS_AS(optimizer_step(unmade, Eigen::VectorXd::Zero(0)),
                  ValidationError);
  CHECK_THROWS_AS(optimizer_step(state, Eigen::VectorXd::Ones(5)),
                  ValidationError);
}

TEST_CASE("config validation rejects malformed settings") {
  auto cfg = config_of(4, 2, 1e-2, 0.1);
  cfg.validate();

  auto bad = cfg;
  bad.update_stride = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.lr = 0.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad.lr_schedule = [](std::uint64_t) { return 0.1; };
  bad.validate();  // schedule overrides the fixed rate
  bad = cfg;
  bad.weight_decay = -1.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.fisher.block_size = 2;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.fisher.dtype = DType::f32;
  CHECK_THROWS_AS(bad.validate(), ValidationError);

  CHECK_THROWS_AS(make_optimizer(Eigen::VectorXd::Ones(5), cfg),
                  ValidationError);
  Eigen::VectorXd nant = Eigen::VectorXd::Ones(4);
  nant[0] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(make_optimizer(nant, cfg), ValidationError);

  // A schedule that goes negative fails at use.
  auto state = make_optimizer(Eigen::VectorXd::Ones(4), cfg);
  state.cfg.lr_schedule = [](std::uint64_t) { return -0.5; };
  CHECK_THROWS_AS(optimizer_step(state, Eigen::VectorXd::Ones(4)),
                  ValidationError);
}

TEST_CASE("learning-rate schedule is applied per step") {
  const std::size_t d = 4, m = 1;
  const double lambda = 0.5;
  auto cfg = config_of(d, m, lambda, 99.0);  // fixed rate must be ignored
  cfg.lr_schedule = [](std::uint64_t k) { return k == 0 ? 0.25 : 0.5; };
  const Eigen::VectorXd theta0 = synth::generate_vector(d, 171);
  const Eigen::VectorXd g0 = synth::generate_vector(d, 172);
  const Eigen::VectorXd g1 = synth::generate_vector(d, 173);
  auto state = make_optimizer(theta0, cfg);

  optimizer_step(state, g0);
  const Eigen::VectorXd theta1 = theta0 - 0.25 * ((1.0 / lambda) * g0);
  CHECK(test::max_abs_diff(state.theta, theta1) == 0.0);

  optimizer_step(state, g1);
  GradientMatrix<double> w(1, d);
  w.data().row(0) = g1.transpose();
  const auto fresh = DynamicSketch<double>::setup(w, cfg.fisher);
  const Eigen::VectorXd theta2 = theta1 - 0.5 * fresh.ihvp(g1);
  CHECK(test::max_abs_diff(state.theta, theta2) == 0.0);
}

// Directions scale linearly with a joint rescale of window and query up to
// the dense oracle tolerance.
TEST_CASE("direction covariance under gradient rescaling") {
  const std::size_t d = 16, m = 5;
  const double lambda = 0.05, scale = 3.0;
  auto cfg = config_of(d, m, lambda, 0.1);
  const auto g = window_of(d, m, 181);
  GradientMatrix<double> scaled(m, d);
  scaled.data() = scale * g.data();
  auto state = make_optimizer(Eigen::VectorXd::Zero(d), cfg);
  state.sketch = DynamicSketch<double>::setup(scaled, cfg.fisher);

  const Eigen::VectorXd q = scale * synth::generate_vector(d, 182);
  const Eigen::VectorXd dir = state.sketch.ihvp(q);
  const Eigen::VectorXd want = oracle::dense_inverse_direct(scaled, lambda) * q;
  CHECK(test::rel_l2(dir, want) <= 1e-9);
}

// Logistic toy: the preconditioned trainer makes real progress and keeps
// pace with plain gradient descent at the same rate on this instance.
TEST_CASE("logistic training makes progress") {
  const std::size_t d = 8, n = 60, m = 8;
  const auto p = problems::LogisticProblem::synthetic(d, n, 1.0, 191);
  auto cfg = config_of(d, m, 1e-2, 0.5);
  auto state = make_optimizer(Eigen::VectorXd::Zero(d), cfg);
  const StepProvider prov{
      [&](const Eigen::VectorXd& t) { return p.loss(t); },
      [&](const Eigen::VectorXd& t, std::uint64_t) { return p.grad(t); }};

  const auto rows = run_training(state, prov, 150);
  const double final_loss = p.loss(state.theta);
  CHECK(final_loss < 0.5 * rows.front().loss);
  CHECK(p.grad(state.theta).norm() < 0.5 * rows.front().grad_norm);

  const Eigen::VectorXd gd =
      problems::gd_minimize(p, Eigen::VectorXd::Zero(d), 0.5, 150);
  CHECK(final_loss <= p.loss(gd) + 0.05);
}

TEST_CASE("trace CSV round-trips every value column") {
  const std::size_t d = 6, m = 3;
  const auto p = problems::QuadraticProblem::synthetic(d, 20, 201);
  auto cfg = config_of(d, m, 0.5, 0.1);
  auto state = make_optimizer(synth::generate_vector(d, 202), cfg);
  const StepProvider prov{
      [&](const Eigen::VectorXd& t) { return p.loss(t); },
      [&](const Eigen::VectorXd& t, std::uint64_t) { return p.grad(t); }};
  const auto rows = run_training(state, prov, 7);

  const auto path = test::temp_path("trace.csv");
  write_trace_csv(path, rows);
  std::ifstream in(path, std::ios::binary);
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "step,loss,grad_norm,step_time_ns");
  std::size_t k = 0;
  while (std::getline(in, line)) {
    REQUIRE(k < rows.size());
    std::stringstream ss(line);
    std::string f0, f1, f2, f3;
    std::getline(ss, f0, ',');
    std::getline(ss, f1, ',');
    std::getline(ss, f2, ',');
    std::getline(ss, f3, ',');
    CHECK(std::stoull(f0) == rows[k].step);
    CHECK(std::stod(f1) == rows[k].loss);
    CHECK(std::stod(f2) == rows[k].grad_norm);
    CHECK(std::stoll(f3) == rows[k].step_time_ns);
    CHECK(rows[k].step_time_ns >= 0);
    ++k;
  }
  CHECK(k == rows.size());
  std::filesystem::remove(path);
}

}  // TEST_SUITE
