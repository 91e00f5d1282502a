// mfac/pruning.hpp

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

#ifndef MFAC_PRUNING_HPP_
#define MFAC_PRUNING_HPP_

#include <Eigen/Cholesky>

#include <algorithm>
#include <concepts>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mfac/config.hpp"
#include "mfac/gradient_matrix.hpp"

namespace mfac::pruning {

// Largest pruned set the correlated linear solve accepts.
inline constexpr std::size_t kMaxSolveSet = 4096;

enum class PruneMode { obd_no_update, obs_simultaneous, obs_linear_solve };

const char* mode_name(PruneMode mode);
PruneMode parse_mode(const std::string& name);

struct PruneDecision {
  std::vector<std::size_t> pruned;  // sorted coordinate set Q
  Eigen::VectorXd saliencies;       // rho over all coordinates
  Eigen::VectorXd delta;            // full update, exactly -theta on Q
  PruneMode mode = PruneMode::obd_no_update;
};

// rho_i = theta_i^2 / (2 diag_inv_i); requires a strictly positive inverse
// diagonal.
Eigen::VectorXd saliency(const Eigen::VectorXd& theta,
                         const Eigen::VectorXd& diag_inv);

// Any estimator answering inverse-curvature queries in f64.
template <typename S>
concept CurvatureModel = requires(const S& s, const Eigen::VectorXd& v,
                                  std::size_t i) {
  { s.dim() } -> std::convertible_to<std::size_t>;
  { s.diag() } -> std::convertible_to<Eigen::VectorXd>;
  { s.ihvp(v) } -> std::convertible_to<Eigen::VectorXd>;
  { s.element(i, i) } -> std::convertible_to<double>;
};

namespace detail {

// Smallest-saliency selection among non-frozen coordinates; ties go to the
// lower index. Returns ascending indices.
std::vector<std::size_t> select_from(const Eigen::VectorXd& rho,
                                     std::size_t count,
                                     std::span<const std::size_t> frozen);

void check_pruned_set(std::span<const std::size_t> q, std::size_t d);

}  // namespace detail

template <CurvatureModel S>
std::vector<std::size_t> select_prune(const Eigen::VectorXd& theta, const S& s,
                                      std::size_t count,
                                      std::span<const std::size_t> frozen = {}) {
  if (std::size_t(theta.size()) != s.dim())
    throw ValidationError("prune selection: parameter length mismatch");
  return detail::select_from(saliency(theta, s.diag()), count, frozen);
}

// delta = -Finv w with w_i = theta_i / [Finv]_ii on Q, one IHVP for the whole
// set; pruned coordinates are then hard-zeroed so theta + delta vanishes on Q
// bit-exactly.
template <CurvatureModel S>
Eigen::VectorXd obs_update_simultaneous(const Eigen::VectorXd& theta,
                                        const S& s,
                                        std::span<const std::size_t> q) {
  const std::size_t d = s.dim();
  if (std::size_t(theta.size()) != d)
    throw ValidationError("obs update: parameter length mismatch");
  detail::check_pruned_set(q, d);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(Eigen::Index(d));
  for (std::size_t i : q) {
    const double dii = s.element(i, i);
    if (!(dii > 0.0))
      throw ValidationError("obs update: nonpositive inverse diagonal at " +
                            std::to_string(i));
    w[Eigen::Index(i)] = theta[Eigen::Index(i)] / dii;
  }
  Eigen::VectorXd delta = -s.ihvp(w);
  for (std::size_t i : q) delta[Eigen::Index(i)] = -theta[Eigen::Index(i)];
  return delta;
}

// Exact correlated update: solve [Finv]_QQ c = theta_Q, then
// delta = -Finv (E_Q c); minimizes 0.5 delta^T F delta subject to
// delta_Q = -theta_Q.
template <CurvatureModel S>
Eigen::VectorXd obs_update_linear_solve(const Eigen::VectorXd& theta,
                                        const S& s,
                                        std::span<const std::size_t> q) {
  const std::size_t d = s.dim();
  if (std::size_t(theta.size()) != d)
    throw ValidationError("obs solve: parameter length mismatch");
  detail::check_pruned_set(q, d);
  if (q.size() > kMaxSolveSet)
    throw ValidationError("obs solve: pruned set of " +
                          std::to_string(q.size()) + " exceeds the solve cap " +
                          std::to_string(kMaxSolveSet) +
                          "; use the simultaneous update");
  const auto k = Eigen::Index(q.size());
  Eigen::MatrixXd a(k, k);
  Eigen::VectorXd rhs(k);
  for (Eigen::Index r = 0; r < k; ++r) {
    rhs[r] = theta[Eigen::Index(q[std::size_t(r)])];
    for (Eigen::Index c = 0; c < k; ++c)
      a(r, c) = s.element(q[std::size_t(r)], q[std::size_t(c)]);
  }
  const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10)
    throw ValidationError(
        "obs solve: inverse-curvature submatrix asymmetry " +
        std::to_string(asym) + " exceeds 1e-10");
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success)
    throw ValidationError(
        "obs solve: pruned-set submatrix is not positive definite");
  const Eigen::VectorXd c = llt.solve(rhs);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(Eigen::Index(d));
  for (Eigen::Index r = 0; r < k; ++r)
    w[Eigen::Index(q[std::size_t(r)])] = c[r];
  Eigen::VectorXd delta = -s.ihvp(w);
  for (std::size_t i : q) delta[Eigen::Index(i)] = -theta[Eigen::Index(i)];
  return delta;
}

template <CurvatureModel S>
PruneDecision prune_once(const Eigen::VectorXd& theta, const S& s,
                         std::size_t count, PruneMode mode,
                         std::span<const std::size_t> frozen = {}) {
  const std::size_t d = s.dim();
  if (std::size_t(theta.size()) != d)
    throw ValidationError("prune: parameter length mismatch");
  PruneDecision dec;
  dec.mode = mode;
  dec.saliencies = saliency(theta, s.diag());
  dec.pruned = detail::select_from(dec.saliencies, count, frozen);
  dec.delta = Eigen::VectorXd::Zero(Eigen::Index(d));
  if (dec.pruned.empty()) return dec;
  switch (mode) {
    case PruneMode::obd_no_update:
      for (std::size_t i : dec.pruned)
        dec.delta[Eigen::Index(i)] = -theta[Eigen::Index(i)];
      break;
    case PruneMode::obs_simultaneous:
      dec.delta = obs_update_simultaneous(theta, s, dec.pruned);
      break;
    case PruneMode::obs_linear_solve:
      dec.delta = obs_update_linear_solve(theta, s, dec.pruned);
      break;
  }
  return dec;
}

// Fresh gradient window evaluated at the current parameters.
using WindowProvider =
    std::function<GradientMatrix<double>(const Eigen::VectorXd&)>;

struct PruneStepResult {
  Eigen::VectorXd theta;
  PruneDecision decision;  // union of sub-step sets; saliencies from the
                           // first sub-step; delta relative to the input
};

// Gradual driver: splits target_count over `recompute` sub-steps, rebuilding
// the sketch from provider output before each; previously pruned coordinates
// stay frozen at exact zero.
PruneStepResult prune_step(const Eigen::VectorXd& theta,
                           const WindowProvider& provider,
                           const FisherConfig& cfg, std::size_t target_count,
                           PruneMode mode, std::size_t recompute);

// Polynomial sparsity ramp: s(t) = target + (initial - target)(1 - t/T)^p.
struct SparsitySchedule {
  double initial = 0.0;
  double target = 0.0;
  std::size_t steps = 1;
  double exponent = 3.0;

  void validate() const;
  double sparsity_at(std::size_t t) const;
  std::size_t count_at(std::size_t t, std::size_t d) const;
};

// CSV: index, theta_before, saliency, in_q, delta, theta_after.
void write_prune_report(const std::filesystem::path& p,
                        const Eigen::VectorXd& theta_before,
                        const PruneDecision& dec);

}  // namespace mfac::pruning

#endif  // MFAC_PRUNING_HPP_
