// mfac/bench.hpp

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

#ifndef MFAC_BENCH_HPP_
#define MFAC_BENCH_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mfac::bench {

struct BenchSpec {
  std::vector<std::size_t> d_grid;  // ihvp sweeps, at fixed_m
  std::vector<std::size_t> m_grid;  // replacement sweep, at fixed_d
  std::size_t fixed_m = 32;
  std::size_t fixed_d = 512;
  double lambda = 1e-2;
  std::uint64_t seed = 0;
  std::size_t reps = 5;     // timed repetitions per point
  std::size_t warmups = 2;  // discarded repetitions per point
  double min_sample_ns = 2e5;  // inner loops grow until one rep costs this

  static BenchSpec defaults();
  void validate() const;
};

struct BenchPoint {
  std::string op;  // static_ihvp | dynamic_ihvp | dynamic_replace
  std::size_t d = 0;
  std::size_t m = 0;
  std::vector<double> samples_ns;  // one per rep, inner-loop mean
  double median_ns = 0.0;
};

struct SlopeFit {
  std::string op;
  std::string axis;  // "d" or "m"
  double slope = 0.0;
  std::size_t points = 0;
};

struct BenchReport {
  std::vector<BenchPoint> points;
  std::vector<SlopeFit> slopes;  // only for sweeps with >= 2 points
};

BenchReport run_bench(const BenchSpec& spec);

// CSV: kind, op, d, m, rep, value. Samples and medians carry nanoseconds;
// slope rows leave the size fields empty. Row layout is deterministic, the
// timing values are not.
void write_bench_csv(const std::filesystem::path& p, const BenchReport& rep);

double median(std::vector<double> v);
// Least-squares slope of log(value) against log(size).
double loglog_slope(const std::vector<double>& sizes,
                    const std::vector<double>& values);

}  // namespace mfac::bench

#endif  // MFAC_BENCH_HPP_
