// mfac/bench.cpp

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

#include "mfac/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>

#include "mfac/dynamic_sketch.hpp"
#include "mfac/io.hpp"
#include "mfac/static_sketch.hpp"
#include "mfac/synth.hpp"

namespace mfac::bench {

BenchSpec BenchSpec::defaults() {
  BenchSpec s;
  // At fixed_m = 32 the sketch state spans 4..32 MB over this grid, keeping
  // every point in the memory-bound regime; smaller sizes straddle the cache
  // hierarchy and bend the log-log fit away from the arithmetic slope.
  s.d_grid = {16384, 32768, 65536, 131072};
  s.m_grid = {32, 64, 128, 256};
  return s;
}

void BenchSpec::validate() const {
  if (d_grid.empty() && m_grid.empty())
    throw ValidationError("bench: empty size grids");
  for (std::size_t d : d_grid)
    if (d == 0) throw ValidationError("bench: d grid contains 0");
  for (std::size_t m : m_grid)
    if (m == 0) throw ValidationError("bench: m grid contains 0");
  if (!d_grid.empty() && fixed_m == 0)
    throw ValidationError("bench: fixed_m must be positive");
  if (!m_grid.empty() && fixed_d == 0)
    throw ValidationError("bench: fixed_d must be positive");
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw ValidationError("bench: lambda must be finite and positive");
  if (reps == 0) throw ValidationError("bench: at least one repetition");
  if (!(min_sample_ns > 0.0))
    throw ValidationError("bench: min_sample_ns must be positive");
}

double median(std::vector<double> v) {
  if (v.empty()) throw ValidationError("median of an empty sample set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double loglog_slope(const std::vector<double>& sizes,
                    const std::vector<double>& values) {
  if (sizes.size() != values.size() || sizes.size() < 2)
    throw ValidationError("slope fit needs at least two points");
  const double n = double(sizes.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (!(sizes[i] > 0.0) || !(values[i] > 0.0))
      throw ValidationError("slope fit needs positive samples");
    const double x = std::log(sizes[i]);
    const double y = std::log(values[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ns(Clock::time_point t0, Clock::time_point t1) {
  return double(
      std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
}

// Runs body(iteration) `iters` times and returns the mean cost per call.
template <typename F>
double time_mean_ns(F&& body, std::size_t iters) {
  const auto t0 = Clock::now();
  for (std::size_t i = 0; i < iters; ++i) body(i);
  const auto t1 = Clock::now();
  return elapsed_ns(t0, t1) / double(iters);
}

// Doubles the inner loop until one repetition costs at least min_ns.
template <typename F>
std::size_t calibrate(F&& body, double min_ns) {
  std::size_t iters = 1;
  for (int round = 0; round < 32; ++round) {
    const double per_call = time_mean_ns(body, iters);
    if (per_call * double(iters) >= min_ns) return iters;
    const double want = min_ns / std::max(per_call, 1.0);
    iters = std::max(iters * 2, std::size_t(want * 1.25) + 1);
  }
  return iters;
}

template <typename F>
BenchPoint measure(const std::string& op, std::size_t d, std::size_t m,
                   const BenchSpec& spec, F&& body) {
  BenchPoint pt;
  pt.op = op;
  pt.d = d;
  pt.m = m;
  const std::size_t iters = calibrate(body, spec.min_sample_ns);
  for (std::size_t w = 0; w < spec.warmups; ++w) time_mean_ns(body, iters);
  pt.samples_ns.reserve(spec.reps);
  for (std::size_t r = 0; r < spec.reps; ++r)
    pt.samples_ns.push_back(time_mean_ns(body, iters));
  pt.median_ns = median(pt.samples_ns);
  return pt;
}

GradientMatrix<double> bench_window(std::size_t d, std::size_t m,
                                    std::uint64_t seed) {
  synth::GenSpec spec;
  spec.d = d;
  spec.m = m;
  spec.seed = seed;
  return synth::generate_gradients(spec);
}

}  // namespace

BenchReport run_bench(const BenchSpec& spec) {
  spec.validate();
  BenchReport rep;

  std::vector<double> stat_sizes, stat_medians;
  std::vector<double> dyn_sizes, dyn_medians;
  for (std::size_t i = 0; i < spec.d_grid.size(); ++i) {
    const std::size_t d = spec.d_grid[i];
    const std::size_t m = spec.fixed_m;
    FisherConfig cfg;
    cfg.dim = d;
    cfg.m = m;
    cfg.lambda = spec.lambda;
    const auto g = bench_window(d, m, spec.seed + i);
    const Eigen::VectorXd x = synth::generate_vector(d, spec.seed + 1000 + i);

    const auto stat = StaticSketch<double>::setup(g, cfg);
    double sink = 0.0;
    rep.points.push_back(measure("static_ihvp", d, m, spec, [&](std::size_t) {
      sink += stat.ihvp(x)[0];
    }));
    stat_sizes.push_back(double(d));
    stat_medians.push_back(rep.points.back().median_ns);

    const auto dyn = DynamicSketch<double>::setup(g, cfg);
    IhvpWork<double> work;
    rep.points.push_back(measure("dynamic_ihvp", d, m, spec, [&](std::size_t) {
      sink += dyn.ihvp(x, &work)[0];
    }));
    dyn_sizes.push_back(double(d));
    dyn_medians.push_back(rep.points.back().median_ns);
    if (!std::isfinite(sink))
      throw ValidationError("bench: ihvp produced non-finite output");
  }

  std::vector<double> rep_sizes, rep_medians;
  for (std::size_t i = 0; i < spec.m_grid.size(); ++i) {
    const std::size_t m = spec.m_grid[i];
    const std::size_t d = spec.fixed_d;
    FisherConfig cfg;
    cfg.dim = d;
    cfg.m = m;
    cfg.lambda = spec.lambda;
    const auto g = bench_window(d, m, spec.seed + 2000 + i);
    auto dyn = DynamicSketch<double>::setup(g, cfg);
    const Eigen::VectorXd gnew =
        synth::generate_vector(d, spec.seed + 3000 + i);
    rep.points.push_back(
        measure("dynamic_replace", d, m, spec, [&](std::size_t k) {
          dyn.replace(k % m, gnew);
        }));
    rep_sizes.push_back(double(m));
    rep_medians.push_back(rep.points.back().median_ns);
  }

  if (stat_sizes.size() >= 2)
    rep.slopes.push_back({"static_ihvp", "d",
                          loglog_slope(stat_sizes, stat_medians),
                          stat_sizes.size()});
  if (dyn_sizes.size() >= 2)
    rep.slopes.push_back({"dynamic_ihvp", "d",
                          loglog_slope(dyn_sizes, dyn_medians),
                          dyn_sizes.size()});
  if (rep_sizes.size() >= 2)
    rep.slopes.push_back({"dynamic_replace", "m",
                          loglog_slope(rep_sizes, rep_medians),
                          rep_sizes.size()});
  return rep;
}

void write_bench_csv(const std::filesystem::path& p, const BenchReport& rep) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot open " + p.string() + " for writing");
  out << "kind,op,axis,d,m,rep,value\n";
  for (const BenchPoint& pt : rep.points) {
    for (std::size_t r = 0; r < pt.samples_ns.size(); ++r)
      out << "sample," << pt.op << ",," << pt.d << ',' << pt.m << ',' << r
          << ',' << io::csv_double(pt.samples_ns[r]) << '\n';
    out << "median," << pt.op << ",," << pt.d << ',' << pt.m << ",,"
        << io::csv_double(pt.median_ns) << '\n';
  }
  for (const SlopeFit& s : rep.slopes)
    out << "slope," << s.op << ',' << s.axis << ",,,,"
        << io::csv_double(s.slope) << '\n';
  if (!out) throw IoError("failed writing " + p.string());
}

}  // namespace mfac::bench
