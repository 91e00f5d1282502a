// mfac/verify.cpp

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

#include "mfac/verify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "mfac/dynamic_sketch.hpp"
#include "mfac/io.hpp"
#include "mfac/oracle.hpp"
#include "mfac/static_sketch.hpp"
#include "mfac/synth.hpp"

namespace mfac::verify {

bool VerifyReport::all_pass() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const CheckResult& c) { return c.pass; });
}

namespace {

void add_check(VerifyReport& rep, std::string name, double value,
               double tolerance) {
  // NaN must fail, so compare negated.
  const bool pass = !(value > tolerance);
  rep.checks.push_back({std::move(name), value, tolerance, pass});
}

double rel_err(const Eigen::VectorXd& got, const Eigen::VectorXd& want) {
  const double scale = want.norm();
  return scale > 0.0 ? (got - want).norm() / scale : (got - want).norm();
}

double max_abs(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

// ||Finv(2x + 3y) - 2 Finv x - 3 Finv y|| relative to the combined query.
template <typename Sketch, typename S>
double linearity_defect_impl(const Sketch& sketch, std::size_t d,
                             std::uint64_t seed) {
  const Vector<S> x = synth::generate_vector(d, seed).cast<S>();
  const Vector<S> y = synth::generate_vector(d, seed + 1).cast<S>();
  const Vector<S> lhs = sketch.ihvp((S(2) * x + S(3) * y).eval());
  const Vector<S> rhs = S(2) * sketch.ihvp(x) + S(3) * sketch.ihvp(y);
  const double scale = double(lhs.norm());
  const double defect = double((lhs - rhs).norm());
  return scale > 0.0 ? defect / scale : defect;
}

template <typename S>
void static_file_checks(const std::filesystem::path& p,
                        const io::Container& c, VerifyReport& rep) {
  const RowMatrix<double> meta = c.get<double>("CFG");
  const double m = meta(0, 0);
  const RowMatrix<S> qrow = c.get<S>("q");
  double min_q = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < qrow.cols(); ++i)
    min_q = std::min(min_q, double(qrow(0, i)));
  double q_defect = (m - min_q) / m;
  if (!std::isfinite(q_defect)) q_defect = 1.0;
  add_check(rep, "q-positivity", std::max(0.0, q_defect), 1e-12);

  const RowMatrix<S> v = c.get<S>("V");
  add_check(rep, "finite-entries", v.allFinite() ? 0.0 : 1.0, 0.0);
  if (!rep.all_pass()) return;

  const auto sketch = StaticSketch<S>::load(p);
  const Vector<S> diag = sketch.diag();
  double diag_defect = 0.0;
  double min_diag = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < sketch.dim(); ++i) {
    diag_defect = std::max(
        diag_defect, std::abs(double(diag[Eigen::Index(i)]) -
                              double(sketch.element(i, i))));
    min_diag = std::min(min_diag, double(diag[Eigen::Index(i)]));
  }
  add_check(rep, "diag-vs-element", diag_defect, 0.0);
  add_check(rep, "diag-positive", min_diag > 0.0 ? 0.0 : 1.0, 0.0);
  const double lin_tol = std::is_same_v<S, float> ? 1e-4 : 1e-12;
  add_check(rep, "ihvp-linearity",
            linearity_defect_impl<StaticSketch<S>, S>(sketch, sketch.dim(), 1),
            lin_tol);
}

template <typename S>
void dynamic_file_checks(const std::filesystem::path& p,
                         const io::Container& c, VerifyReport& rep) {
  const RowMatrix<double> cnt = c.get<double>("CNT");
  const double filled = cnt(0, 0);
  const RowMatrix<S> dmat = c.get<S>("D");
  double q_defect = 0.0;
  for (Eigen::Index i = 0; i < Eigen::Index(filled); ++i) {
    const double v = -double(dmat(i, i)) / filled;
    q_defect = std::isfinite(v) ? std::max(q_defect, v) : 1.0;
  }
  add_check(rep, "q-positivity", q_defect, 1e-12);

  const RowMatrix<S> g = c.get<S>("G");
  add_check(rep, "finite-entries", g.allFinite() ? 0.0 : 1.0, 0.0);
  if (!rep.all_pass()) return;

  auto sketch = DynamicSketch<S>::load(p);
  const double lin_tol = std::is_same_v<S, float> ? 1e-4 : 1e-12;
  add_check(
      rep, "ihvp-linearity",
      linearity_defect_impl<DynamicSketch<S>, S>(sketch, sketch.dim(), 1),
      lin_tol);
  if (sketch.filled() == sketch.capacity()) {
    const Vector<S> gnew =
        synth::generate_vector(sketch.dim(), 3).template cast<S>();
    auto split = sketch;
    const std::size_t slot = split.window_state().next_slot;
    const Vector<S> fused = sketch.update_and_ihvp(gnew);
    split.replace(slot, gnew);
    const Vector<S> two_calls = split.ihvp(gnew);
    add_check(rep, "fused-vs-split",
              double((fused - two_calls).cwiseAbs().maxCoeff()), 0.0);
  }
}

}  // namespace

VerifyReport verify_instance(std::size_t d, std::size_t m, double lambda,
                             std::uint64_t seed) {
  if (d > oracle::kMaxDenseDim)
    throw ValidationError("verify: d = " + std::to_string(d) +
                          " exceeds the dense oracle guard " +
                          std::to_string(oracle::kMaxDenseDim) +
                          "; reduce d for the cross-equivalence suite");
  FisherConfig cfg;
  cfg.dim = d;
  cfg.m = m;
  cfg.lambda = lambda;
  cfg.validate();

  synth::GenSpec spec;
  spec.d = d;
  spec.m = m;
  spec.seed = seed;
  const GradientMatrix<double> g = synth::generate_gradients(spec);
  const Eigen::VectorXd x = synth::generate_vector(d, seed ^ 0x9e3779b9ull);

  const auto stat = StaticSketch<double>::setup(g, cfg);
  const auto dyn = DynamicSketch<double>::setup(g, cfg);

  VerifyReport rep;
  // Window denominators, via the dynamic parameterization q_i = m + D_ii.
  double q_defect = 0.0;
  for (Eigen::Index i = 0; i < Eigen::Index(m); ++i)
    q_defect =
        std::max(q_defect, -double(dyn.d_matrix()(i, i)) / double(m));
  add_check(rep, "q-positivity", std::max(0.0, q_defect), 1e-12);

  const Eigen::MatrixXd hinv = oracle::dense_inverse_woodbury(g, lambda);
  const Eigen::VectorXd want = hinv * x;
  const Eigen::VectorXd ys = stat.ihvp(x);
  const Eigen::VectorXd yd = dyn.ihvp(x);
  add_check(rep, "static-ihvp-vs-dense", rel_err(ys, want), 1e-9);
  add_check(rep, "dynamic-ihvp-vs-dense", rel_err(yd, want), 1e-9);
  add_check(rep, "static-vs-dynamic-ihvp", rel_err(yd, ys), 1e-9);

  // Entry queries against the extended-precision oracle: the diagonal plus a
  // deterministic off-diagonal sample.
  const Eigen::MatrixXd hinv_hp = oracle::dense_inverse_woodbury_hp(g, lambda);
  double elem_err = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    elem_err = std::max(
        elem_err, std::abs(stat.element(i, i) - hinv_hp(Eigen::Index(i),
                                                        Eigen::Index(i))));
    const std::size_t j = (i * 7 + 3) % d;
    elem_err = std::max(
        elem_err, std::abs(stat.element(i, j) - hinv_hp(Eigen::Index(i),
                                                        Eigen::Index(j))));
  }
  add_check(rep, "element-vs-dense", elem_err, 1e-10);

  const Eigen::VectorXd diag = stat.diag();
  double diag_defect = 0.0;
  for (std::size_t i = 0; i < d; ++i)
    diag_defect = std::max(
        diag_defect, std::abs(diag[Eigen::Index(i)] - stat.element(i, i)));
  add_check(rep, "diag-vs-element", diag_defect, 0.0);

  // Mutation equivalences on the dynamic path.
  const Eigen::VectorXd gnew = synth::generate_vector(d, seed ^ 0x5bd1e995ull);
  {
    auto fused_sketch = dyn;
    auto split_sketch = dyn;
    const std::size_t slot = split_sketch.window_state().next_slot;
    const Eigen::VectorXd fused = fused_sketch.update_and_ihvp(gnew);
    split_sketch.replace(slot, gnew);
    const Eigen::VectorXd two_calls = split_sketch.ihvp(gnew);
    add_check(rep, "fused-vs-split",
              (fused - two_calls).cwiseAbs().maxCoeff(), 0.0);
  }
  {
    auto replaced = dyn;
    replaced.replace(m / 2, gnew);
    GradientMatrix<double> mutated(m, d);
    mutated.data() = replaced.gradients();
    const auto fresh = DynamicSketch<double>::setup(mutated, cfg);
    const double coeff_drift =
        std::max(max_abs(replaced.d_matrix(), fresh.d_matrix()),
                 max_abs(replaced.b_matrix(), fresh.b_matrix()));
    add_check(rep, "replace-vs-rebuild", coeff_drift, 0.0);
  }

  add_check(rep, "static-inverse-roundtrip",
            rel_err(oracle::fisher_apply(g, lambda, ys), x), 1e-8);
  add_check(rep, "dynamic-inverse-roundtrip",
            rel_err(oracle::fisher_apply(g, lambda, yd), x), 1e-8);
  return rep;
}

VerifyReport verify_sketch_file(const std::filesystem::path& p) {
  const io::Container c = io::Container::load(p);
  const bool is_static = c.has("V");
  const bool is_dynamic = c.has("G") && c.has("D");
  if (!is_static && !is_dynamic)
    throw ValidationError("verify: " + p.string() +
                          " does not hold a known sketch layout");
  VerifyReport rep;
  if (is_static) {
    if (c.dtype == DType::f32)
      static_file_checks<float>(p, c, rep);
    else
      static_file_checks<double>(p, c, rep);
  } else {
    if (c.dtype == DType::f32)
      dynamic_file_checks<float>(p, c, rep);
    else
      dynamic_file_checks<double>(p, c, rep);
  }
  return rep;
}

void write_verify_csv(const std::filesystem::path& p,
                      const VerifyReport& report) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot open " + p.string() + " for writing");
  out << "check,value,tolerance,status\n";
  for (const CheckResult& c : report.checks)
    out << c.name << ',' << io::csv_double(c.value) << ','
        << io::csv_double(c.tolerance) << ',' << (c.pass ? "PASS" : "FAIL")
        << '\n';
  if (!out) throw IoError("failed writing " + p.string());
}

}  // namespace mfac::verify
