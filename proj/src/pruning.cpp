// mfac/pruning.cpp

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

#include "mfac/pruning.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "mfac/io.hpp"
#include "mfac/static_sketch.hpp"

namespace mfac::pruning {

const char* mode_name(PruneMode mode) {
  switch (mode) {
    case PruneMode::obd_no_update:
      return "obd";
    case PruneMode::obs_simultaneous:
      return "obs";
    case PruneMode::obs_linear_solve:
      return "obs-solve";
  }
  throw ValidationError("prune: unknown mode value");
}

PruneMode parse_mode(const std::string& name) {
  if (name == "obd") return PruneMode::obd_no_update;
  if (name == "obs") return PruneMode::obs_simultaneous;
  if (name == "obs-solve") return PruneMode::obs_linear_solve;
  throw ValidationError("prune: unknown mode '" + name +
                        "' (expected obd, obs, or obs-solve)");
}

Eigen::VectorXd saliency(const Eigen::VectorXd& theta,
                         const Eigen::VectorXd& diag_inv) {
  if (theta.size() != diag_inv.size())
    throw ValidationError("saliency: length mismatch");
  if (!theta.allFinite())
    throw ValidationError("saliency: parameters are not finite");
  Eigen::VectorXd rho(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    if (!(diag_inv[i] > 0.0))
      throw ValidationError("saliency: nonpositive inverse diagonal at " +
                            std::to_string(i));
    rho[i] = theta[i] * theta[i] / (2.0 * diag_inv[i]);
  }
  return rho;
}

namespace detail {

std::vector<std::size_t> select_from(const Eigen::VectorXd& rho,
                                     std::size_t count,
                                     std::span<const std::size_t> frozen) {
  const auto d = std::size_t(rho.size());
  std::vector<char> blocked(d, 0);
  for (std::size_t i : frozen) {
    if (i >= d)
      throw ValidationError("prune selection: frozen index out of range");
    blocked[i] = 1;
  }
  std::vector<std::size_t> order;
  order.reserve(d);
  for (std::size_t i = 0; i < d; ++i)
    if (!blocked[i]) order.push_back(i);
  if (count > order.size())
    throw ValidationError("prune selection: requested " +
                          std::to_string(count) + " coordinates but only " +
                          std::to_string(order.size()) + " remain");
  std::sort(order.begin(), order.end(), [&rho](std::size_t a, std::size_t b) {
    const double ra = rho[Eigen::Index(a)];
    const double rb = rho[Eigen::Index(b)];
    return ra != rb ? ra < rb : a < b;
  });
  order.resize(count);
  std::sort(order.begin(), order.end());
  return order;
}

void check_pruned_set(std::span<const std::size_t> q, std::size_t d) {
  if (q.empty()) throw ValidationError("obs update: empty pruned set");
  std::vector<char> seen(d, 0);
  for (std::size_t i : q) {
    if (i >= d) throw ValidationError("obs update: index out of range");
    if (seen[i]) throw ValidationError("obs update: duplicate index " +
                                       std::to_string(i));
    seen[i] = 1;
  }
}

}  // namespace detail

namespace {

// Even split of the remaining budget, early sub-steps take the remainder.
std::vector<std::size_t> split_counts(std::size_t total, std::size_t parts) {
  std::vector<std::size_t> out(parts, total / parts);
  for (std::size_t k = 0; k < total % parts; ++k) ++out[k];
  return out;
}

std::vector<std::size_t> merge_sorted(const std::vector<std::size_t>& a,
                                      const std::vector<std::size_t>& b) {
  std::vector<std::size_t> out;
  out.reserve(a.size() + b.size());
  std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

}  // namespace

PruneStepResult prune_step(const Eigen::VectorXd& theta,
                           const WindowProvider& provider,
                           const FisherConfig& cfg, std::size_t target_count,
                           PruneMode mode, std::size_t recompute) {
  if (!provider) throw ValidationError("prune step: missing window provider");
  if (recompute == 0)
    throw ValidationError("prune step: recompute must be at least 1");
  if (std::size_t(theta.size()) != cfg.dim)
    throw ValidationError("prune step: parameter length mismatch");
  if (target_count > cfg.dim)
    throw ValidationError("prune step: target exceeds dimension");

  PruneStepResult res;
  res.theta = theta;
  res.decision.mode = mode;
  res.decision.pruned.clear();

  const std::vector<std::size_t> counts = split_counts(target_count, recompute);
  for (std::size_t k = 0; k < recompute; ++k) {
    if (k > 0 && counts[k] == 0) continue;
    GradientMatrix<double> window = provider(res.theta);
    if (window.dim() != cfg.dim)
      throw ValidationError("prune step: provider returned dim " +
                            std::to_string(window.dim()) + ", expected " +
                            std::to_string(cfg.dim));
    FisherConfig sub = cfg;
    sub.m = window.rows();
    // One full-width block reproduces the plain sketch exactly, so the
    // blocked estimator serves both layouts.
    const auto sketch = BlockStaticSketch<double>::setup(window, sub);
    PruneDecision dec = prune_once(res.theta, sketch, counts[k], mode,
                                   res.decision.pruned);
    if (k == 0) res.decision.saliencies = dec.saliencies;
    res.theta += dec.delta;
    res.decision.pruned = merge_sorted(res.decision.pruned, dec.pruned);
    // Correlated updates move every coordinate; pin the cumulative set back
    // to exact zero.
    for (std::size_t i : res.decision.pruned)
      res.theta[Eigen::Index(i)] = 0.0;
  }
  res.decision.delta = res.theta - theta;
  return res;
}

void SparsitySchedule::validate() const {
  if (!(initial >= 0.0) || !(initial < 1.0))
    throw ValidationError("sparsity schedule: initial must be in [0, 1)");
  if (!(target >= initial) || !(target < 1.0))
    throw ValidationError(
        "sparsity schedule: target must be in [initial, 1); a target of 1 "
        "would remove every coordinate");
  if (steps == 0) throw ValidationError("sparsity schedule: steps must be > 0");
  if (!(exponent > 0.0))
    throw ValidationError("sparsity schedule: exponent must be positive");
}

double SparsitySchedule::sparsity_at(std::size_t t) const {
  validate();
  if (t >= steps) return target;
  const double frac = 1.0 - double(t) / double(steps);
  return target + (initial - target) * std::pow(frac, exponent);
}

std::size_t SparsitySchedule::count_at(std::size_t t, std::size_t d) const {
  return std::size_t(std::floor(sparsity_at(t) * double(d)));
}

void write_prune_report(const std::filesystem::path& p,
                        const Eigen::VectorXd& theta_before,
                        const PruneDecision& dec) {
  const Eigen::Index d = theta_before.size();
  if (dec.saliencies.size() != d || dec.delta.size() != d)
    throw ValidationError("prune report: decision length mismatch");
  std::vector<char> in_q(std::size_t(d), 0);
  for (std::size_t i : dec.pruned) {
    if (i >= std::size_t(d))
      throw ValidationError("prune report: pruned index out of range");
    in_q[i] = 1;
  }
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot open " + p.string() + " for writing");
  out << "index,theta_before,saliency,in_q,delta,theta_after\n";
  for (Eigen::Index i = 0; i < d; ++i) {
    out << i << ',' << io::csv_double(theta_before[i]) << ','
        << io::csv_double(dec.saliencies[i]) << ','
        << int(in_q[std::size_t(i)]) << ',' << io::csv_double(dec.delta[i])
        << ',' << io::csv_double(theta_before[i] + dec.delta[i]) << '\n';
  }
  if (!out) throw IoError("failed writing " + p.string());
}

}  // namespace mfac::pruning
