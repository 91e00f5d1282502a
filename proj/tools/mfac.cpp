// mfac/tools/mfac.cpp

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

// Command-line front end. Exit codes: 0 success, 1 validation failure,
// 2 I/O error. All reports are CSV with '.' decimals and '\n' terminators;
// every command is deterministic given (inputs, seed, dtype), except that
// bench CSVs carry wall-clock times.

#include <CLI11.hpp>

#include <cstdio>
#include <string>

#include "mfac/bench.hpp"
#include "mfac/io.hpp"
#include "mfac/optimizer.hpp"
#include "mfac/oracle.hpp"
#include "mfac/problems.hpp"
#include "mfac/pruning.hpp"
#include "mfac/static_sketch.hpp"
#include "mfac/synth.hpp"
#include "mfac/verify.hpp"

namespace {

using namespace mfac;

// Seed salt for the companion weights fixture emitted by gen.
constexpr std::uint64_t kWeightsSalt = 0x77ee11aaull;

DType parse_dtype(const std::string& s) {
  if (s == "f64") return DType::f64;
  if (s == "f32") return DType::f32;
  throw ValidationError("dtype must be f64 or f32, got '" + s + "'");
}

GradientMatrix<double> load_window(const std::filesystem::path& p) {
  if (p.extension() == ".csv") return io::load_gradients_csv<double>(p);
  return io::load_gradients<double>(p);
}

void write_kv_report(const std::filesystem::path& p,
                     const std::vector<std::pair<std::string, std::string>>&
                         rows) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot open " + p.string() + " for writing");
  out << "key,value\n";
  for (const auto& [k, v] : rows) out << k << ',' << v << '\n';
  if (!out) throw IoError("failed writing " + p.string());
}

struct CommonFlags {
  std::size_t d = 64;
  std::size_t m = 16;
  double lambda = 1e-2;
  std::size_t blocksize = 0;
  std::string dtype = "f64";
  std::uint64_t seed = 0;
  double sparsity = 0.0;
  std::string mode = "obs";
  std::size_t recompute = 1;
  std::size_t steps = 100;
  double lr = 0.1;
  std::string out;
};

int run_gen(const CommonFlags& f) {
  if (f.out.empty()) throw ValidationError("gen: --out prefix is required");
  synth::GenSpec spec;
  spec.d = f.d;
  spec.m = f.m;
  spec.seed = f.seed;
  const std::filesystem::path grads_path = f.out + ".grads.mfacbin";
  const std::filesystem::path weights_path = f.out + ".weights.mfacbin";
  const std::filesystem::path meta_path = f.out + ".meta.csv";
  if (parse_dtype(f.dtype) == DType::f32)
    io::save_gradients(grads_path, synth::generate_gradients_f32(spec));
  else
    io::save_gradients(grads_path, synth::generate_gradients(spec));
  io::save_weights(weights_path,
                   synth::generate_vector(f.d, f.seed ^ kWeightsSalt));
  write_kv_report(meta_path, {{"d", std::to_string(f.d)},
                              {"m", std::to_string(f.m)},
                              {"seed", std::to_string(f.seed)},
                              {"dtype", f.dtype}});
  std::printf("gen: wrote %s, %s, %s (seed %llu)\n", grads_path.c_str(),
              weights_path.c_str(), meta_path.c_str(),
              static_cast<unsigned long long>(f.seed));
  return 0;
}

int run_verify(const CommonFlags& f, const std::string& sketch_path) {
  verify::VerifyReport report;
  if (!sketch_path.empty()) {
    report = verify::verify_sketch_file(sketch_path);
  } else {
    report = verify::verify_instance(f.d, f.m, f.lambda, f.seed);
  }
  for (const auto& c : report.checks)
    std::printf("[%s] %-28s value %.3e  tolerance %.3e\n",
                c.pass ? "PASS" : "FAIL", c.name.c_str(), c.value,
                c.tolerance);
  if (!f.out.empty()) verify::write_verify_csv(f.out, report);
  if (!report.all_pass()) {
    for (const auto& c : report.checks)
      if (!c.pass)
        std::fprintf(stderr, "verify: check '%s' failed\n", c.name.c_str());
    return 1;
  }
  std::printf("verify: all %zu checks passed\n", report.checks.size());
  return 0;
}

int run_prune(const CommonFlags& f, const std::string& grads_path,
              const std::string& weights_path) {
  if (f.out.empty()) throw ValidationError("prune: --out prefix is required");
  if (!(f.sparsity >= 0.0) || f.sparsity >= 1.0)
    throw ValidationError(
        "prune: --sparsity must lie in [0, 1); 1.0 would remove every "
        "coordinate");
  GradientMatrix<double> window = load_window(grads_path);
  const Eigen::VectorXd theta = io::load_weights(weights_path);
  if (window.dim() != std::size_t(theta.size()))
    throw ValidationError("prune: gradient dim " +
                          std::to_string(window.dim()) +
                          " does not match weight length " +
                          std::to_string(theta.size()));
  const std::size_t d = window.dim();
  const std::size_t count = std::size_t(f.sparsity * double(d));
  const auto mode = pruning::parse_mode(f.mode);

  FisherConfig cfg;
  cfg.dim = d;
  cfg.m = window.rows();
  cfg.lambda = f.lambda;
  cfg.block_size = f.blocksize;

  // Sub-steps beyond the first draw fresh windows from a quadratic toy whose
  // data rows are the supplied gradients; the first sub-step always sees the
  // file exactly.
  const problems::QuadraticProblem toy(window.data());
  std::size_t calls = 0;
  const pruning::WindowProvider provider =
      [&](const Eigen::VectorXd& th) -> GradientMatrix<double> {
    if (calls++ == 0) {
      GradientMatrix<double> copy(window.rows(), window.dim());
      copy.data() = window.data();
      return copy;
    }
    return toy.window(th, window.rows(), f.seed + calls);
  };

  const auto res =
      pruning::prune_step(theta, provider, cfg, count, mode, f.recompute);
  io::save_weights(f.out + ".weights.mfacbin", res.theta);
  pruning::write_prune_report(f.out + ".report.csv", theta, res.decision);
  std::printf("prune: removed %zu of %zu coordinates (mode %s) -> %s\n",
              res.decision.pruned.size(), d, pruning::mode_name(mode),
              (f.out + ".weights.mfacbin").c_str());
  return 0;
}

int run_optimize(const CommonFlags& f) {
  if (f.out.empty())
    throw ValidationError("optimize: --out prefix is required");
  // Bundled logistic toy: n = 10 d separable-with-margin samples.
  const auto problem =
      problems::LogisticProblem::synthetic(f.d, 10 * f.d, 1.0, f.seed);

  optimizer::OptimizerConfig cfg;
  cfg.fisher.dim = f.d;
  cfg.fisher.m = f.m;
  cfg.fisher.lambda = f.lambda;
  cfg.lr = f.lr;
  auto state = optimizer::make_optimizer(Eigen::VectorXd::Zero(f.d), cfg);
  const optimizer::StepProvider prov{
      [&](const Eigen::VectorXd& t) { return problem.loss(t); },
      [&](const Eigen::VectorXd& t, std::uint64_t) {
        return problem.grad(t);
      }};
  const auto rows = optimizer::run_training(state, prov, f.steps);
  optimizer::write_trace_csv(f.out + ".trace.csv", rows,
                             /*with_timings=*/false);

  // Long-run plain gradient descent pins the reference loss.
  const Eigen::VectorXd gd_theta = problems::gd_minimize(
      problem, Eigen::VectorXd::Zero(f.d), 1.0, 20000);
  const double final_loss = problem.loss(state.theta);
  const double oracle_loss = problem.loss(gd_theta);
  const bool warmup_only = f.steps <= f.m;
  write_kv_report(
      f.out + ".report.csv",
      {{"steps", std::to_string(f.steps)},
       {"warmup_steps", std::to_string(std::min(f.steps, f.m))},
       {"warmup_only", warmup_only ? "1" : "0"},
       {"final_loss", io::csv_double(final_loss)},
       {"gd_oracle_loss", io::csv_double(oracle_loss)},
       {"loss_gap", io::csv_double(final_loss - oracle_loss)},
       {"final_grad_norm",
        io::csv_double(problem.grad(state.theta).norm())}});
  std::printf("optimize: %zu steps, final loss %.6e (gd oracle %.6e)%s\n",
              f.steps, final_loss, oracle_loss,
              warmup_only ? " [warmup-only run]" : "");
  return 0;
}

int run_bench(const CommonFlags& f, bool d_given, bool m_given) {
  if (f.out.empty()) throw ValidationError("bench: --out path is required");
  bench::BenchSpec spec = bench::BenchSpec::defaults();
  spec.lambda = f.lambda;
  spec.seed = f.seed;
  if (d_given || m_given) {
    // Explicit sizes select a single point per operation.
    spec.d_grid = d_given ? std::vector<std::size_t>{f.d}
                          : std::vector<std::size_t>{};
    spec.m_grid = m_given ? std::vector<std::size_t>{f.m}
                          : std::vector<std::size_t>{};
    if (m_given) spec.fixed_m = f.m;
    if (d_given) spec.fixed_d = f.d;
  }
  const auto report = bench::run_bench(spec);
  bench::write_bench_csv(f.out, report);
  for (const auto& pt : report.points)
    std::printf("bench: %-16s d=%-6zu m=%-4zu median %.3e ns\n",
                pt.op.c_str(), pt.d, pt.m, pt.median_ns);
  for (const auto& s : report.slopes)
    std::printf("bench: slope of %s in %s: %.3f (%zu points)\n",
                s.op.c_str(), s.axis.c_str(), s.slope, s.points);
  if (report.slopes.empty())
    std::printf("bench: single-point grid, slopes omitted\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "mfac: matrix-free inverse-Fisher queries, pruning, and training"};
  app.require_subcommand(1);

  CommonFlags f;
  std::string sketch_path, grads_path, weights_path;

  auto add_common = [&f](CLI::App* cmd) {
    cmd->add_option("--d", f.d, "problem dimension");
    cmd->add_option("--m", f.m, "gradient window size");
    cmd->add_option("--lambda", f.lambda, "dampening (> 0)");
    cmd->add_option("--blocksize", f.blocksize,
                    "block width for the blocked estimator (0 = full width)");
    cmd->add_option("--dtype", f.dtype, "f64 or f32");
    cmd->add_option("--seed", f.seed, "deterministic RNG seed");
    cmd->add_option("--sparsity", f.sparsity, "fraction to prune, in [0, 1)");
    cmd->add_option("--mode", f.mode, "prune mode: obd, obs, obs-solve");
    cmd->add_option("--recompute", f.recompute,
                    "prune sub-steps with window recomputation");
    cmd->add_option("--steps", f.steps, "optimizer steps");
    cmd->add_option("--lr", f.lr, "learning rate");
    cmd->add_option("--out", f.out, "output path or prefix");
  };

  auto* gen = app.add_subcommand("gen", "write a synthetic gradient fixture");
  add_common(gen);

  auto* verify_cmd =
      app.add_subcommand("verify", "cross-check estimators against oracles");
  verify_cmd->add_option("sketch", sketch_path,
                         "optional sketch file to validate");
  add_common(verify_cmd);

  auto* prune =
      app.add_subcommand("prune", "one-shot or gradual weight pruning");
  prune->add_option("grads", grads_path, "gradient window (.mfacbin or .csv)")
      ->required();
  prune->add_option("weights", weights_path, "weight vector (.mfacbin)")
      ->required();
  add_common(prune);

  auto* optimize =
      app.add_subcommand("optimize", "train the bundled logistic toy");
  add_common(optimize);

  auto* bench_cmd =
      app.add_subcommand("bench", "time the kernels over size grids");
  add_common(bench_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return run_gen(f);
    if (verify_cmd->parsed()) return run_verify(f, sketch_path);
    if (prune->parsed()) return run_prune(f, grads_path, weights_path);
    if (optimize->parsed()) return run_optimize(f);
    if (bench_cmd->parsed())
      return run_bench(f, bench_cmd->count("--d") > 0,
                       bench_cmd->count("--m") > 0);
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
