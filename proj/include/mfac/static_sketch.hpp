// mfac/static_sketch.hpp

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

#ifndef MFAC_STATIC_SKETCH_HPP_
#define MFAC_STATIC_SKETCH_HPP_

#include <exception>
#include <filesystem>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mfac/config.hpp"
#include "mfac/gradient_matrix.hpp"
#include "mfac/io.hpp"

namespace mfac {

namespace detail {

// Shared correction step of the setup recursion: given a raw gradient g and
// the finished rows w_r (r in [r0, r1), contiguous in `rows` starting at
// local index 0 for global row `rows_global_base`), subtract each row's
// projection from the in-progress accumulator row y:
//   y -= w_r * ((w_r . g) / q_r)
// The whole recursion runs in the extended accumulator; a row rounds into
// storage exactly once, after every row that reads it has been built. Row
// order is ascending and the reductions are order-deterministic, so the
// paged and in-memory paths produce identical bits.
template <typename T>
inline void apply_row_corrections(const AccumT<T>* rows, std::size_t d,
                                  const AccumT<T>* q,
                                  std::size_t rows_global_base,
                                  std::size_t count, const T* g,
                                  AccumT<T>* y) {
  using A = AccumT<T>;
  for (std::size_t r = 0; r < count; ++r) {
    const A* wr = rows + r * d;
    const A c = dot_mixed(wr, g, d) / q[rows_global_base + r];
    for (std::size_t k = 0; k < d; ++k) y[k] -= c * wr[k];
  }
}

}  // namespace detail

// Fixed-window estimator state: V holds the partial preconditioned gradients
// v_i = Finv_{i-1} g_i, q_i = m + v_i . g_i. Queries against
//   Finv = lambda^-1 I - sum_i v_i v_i^T / q_i
// run in O(dm) (ihvp, diag) or O(m) (single element). Immutable once built.
template <typename T>
class StaticSketch {
 public:
  StaticSketch() = default;

  // Consuming setup overwrites the gradient rows with V in place.
  static StaticSketch setup(GradientMatrix<T>&& grads, const FisherConfig& cfg) {
    check_inputs(grads, cfg);
    StaticSketch s;
    s.cfg_ = cfg;
    s.v_ = std::move(grads.data());
    s.q_.resize(s.v_.rows());
    build(s.v_, s.q_, cfg);
    return s;
  }

  // Copy-preserving setup for cross-checks against the raw window.
  static StaticSketch setup(const GradientMatrix<T>& grads,
                            const FisherConfig& cfg) {
    GradientMatrix<T> copy(RowMatrix<T>(grads.data()));
    return setup(std::move(copy), cfg);
  }

  static StaticSketch from_parts(RowMatrix<T> v, Vector<T> q,
                                 const FisherConfig& cfg) {
    cfg.validate();
    if (v.rows() != Eigen::Index(cfg.m) || v.cols() != Eigen::Index(cfg.dim))
      throw ValidationError("static sketch: V shape does not match config");
    if (q.size() != Eigen::Index(cfg.m))
      throw ValidationError("static sketch: q length does not match config");
    for (Eigen::Index i = 0; i < q.size(); ++i)
      detail::check_denominator(q[i], T(cfg.m), std::size_t(i),
                                "static sketch");
    StaticSketch s;
    s.cfg_ = cfg;
    s.v_ = std::move(v);
    s.q_ = std::move(q);
    return s;
  }

  // Finv x.
  Vector<T> ihvp(const Eigen::Ref<const Vector<T>>& x) const {
    require_ready();
    if (x.size() != Eigen::Index(cfg_.dim))
      throw ValidationError("static ihvp: vector length " +
                            std::to_string(x.size()) + " != dim " +
                            std::to_string(cfg_.dim));
    Vector<T> t = v_ * x;
    t.array() /= q_.array();
    Vector<T> y = (T(1) / T(cfg_.lambda)) * x;
    y.noalias() -= v_.transpose() * t;
    return y;
  }

  // [Finv]_ij in O(m). The sum cancels against 1/lambda, so it runs in the
  // extended accumulator and rounds once on return.
  T element(std::size_t i, std::size_t j) const {
    using A = AccumT<T>;
    require_ready();
    if (i >= cfg_.dim || j >= cfg_.dim)
      throw ValidationError("static element: index out of range");
    const T* base = v_.data();
    const std::size_t d = cfg_.dim;
    A acc = A(0);
    for (std::size_t k = 0; k < std::size_t(v_.rows()); ++k)
      acc += A(base[k * d + i]) * A(base[k * d + j]) /
             A(q_[Eigen::Index(k)]);
    const A lead = (i == j) ? A(1) / A(cfg_.lambda) : A(0);
    return T(lead - acc);
  }

  // diag(Finv); element-identical to element(i, i).
  Vector<T> diag() const {
    require_ready();
    Vector<T> out(Eigen::Index(cfg_.dim));
    for (std::size_t i = 0; i < cfg_.dim; ++i)
      out[Eigen::Index(i)] = element(i, i);
    return out;
  }

  // Finv applied to the indicator of an index set (no duplicates).
  Vector<T> row_select(std::span<const std::size_t> indices) const {
    require_ready();
    Vector<T> e = Vector<T>::Zero(Eigen::Index(cfg_.dim));
    for (std::size_t i : indices) {
      if (i >= cfg_.dim)
        throw ValidationError("row select: index out of range");
      if (e[Eigen::Index(i)] != T(0))
        throw ValidationError("row select: duplicate index " +
                              std::to_string(i));
      e[Eigen::Index(i)] = T(1);
    }
    return ihvp(e);
  }

  std::size_t dim() const { return cfg_.dim; }
  std::size_t window() const { return cfg_.m; }
  const FisherConfig& config() const { return cfg_; }
  const RowMatrix<T>& v() const { return v_; }
  const Vector<T>& q() const { return q_; }

  void save(const std::filesystem::path& p) const {
    require_ready();
    io::Container c;
    c.dtype = cfg_.dtype;
    c.add("V", v_);
    RowMatrix<T> qrow(1, q_.size());
    qrow.row(0) = q_.transpose();
    c.add("q", qrow);
    RowMatrix<double> meta(1, 4);
    meta << double(cfg_.m), double(cfg_.dim), double(cfg_.block_size),
        cfg_.lambda;
    c.add("CFG", meta);
    c.save(p);
  }

  static StaticSketch load(const std::filesystem::path& p) {
    io::Container c = io::Container::load(p);
    if ((c.dtype == DType::f32) != std::is_same_v<T, float>)
      throw ValidationError("static sketch: file dtype is " +
                            std::string(dtype_name(c.dtype)));
    RowMatrix<double> meta = c.get<double>("CFG");
    if (meta.rows() != 1 || meta.cols() != 4)
      throw ValidationError("static sketch: malformed CFG section");
    FisherConfig cfg;
    cfg.m = std::size_t(meta(0, 0));
    cfg.dim = std::size_t(meta(0, 1));
    cfg.block_size = std::size_t(meta(0, 2));
    cfg.lambda = meta(0, 3);
    cfg.dtype = c.dtype;
    RowMatrix<T> v = c.get<T>("V");
    RowMatrix<T> qrow = c.get<T>("q");
    if (qrow.rows() != 1)
      throw ValidationError("static sketch: q section must be a row");
    GradientMatrix<T> finite_check{RowMatrix<T>(v)};
    finite_check.require_finite();
    Vector<T> q = qrow.row(0).transpose();
    for (Eigen::Index i = 0; i < q.size(); ++i)
      if (!std::isfinite(double(q[i])))
        throw ValidationError("static sketch: non-finite q entry");
    return from_parts(std::move(v), std::move(q), cfg);
  }

 private:
  FisherConfig cfg_;
  RowMatrix<T> v_;
  Vector<T> q_;

  static void check_inputs(const GradientMatrix<T>& g, const FisherConfig& cfg) {
    cfg.validate();
    if ((cfg.dtype == DType::f32) != std::is_same_v<T, float>)
      throw ValidationError("static sketch: scalar type does not match "
                            "config dtype");
    if (g.rows() != cfg.m)
      throw ValidationError("static sketch: window has " +
                            std::to_string(g.rows()) + " rows, config m = " +
                            std::to_string(cfg.m));
    if (g.dim() != cfg.dim)
      throw ValidationError("static sketch: gradient dim " +
                            std::to_string(g.dim()) + " != config dim " +
                            std::to_string(cfg.dim));
    g.require_finite();
  }

  void require_ready() const {
    if (v_.size() == 0)
      throw ValidationError("static sketch: not initialized");
  }

  // In-place recursion over the window rows. On entry row i holds g_i; on
  // exit it holds v_i. The finished rows live in a transient extended-
  // precision scratch until the whole window is built, so each stored row
  // and denominator is the once-rounded value of the exact recursion over
  // the inputs; rounded rows never feed later rows. Equivalent to the paged
  // schedule with one page.
  static void build(RowMatrix<T>& v, Vector<T>& q, const FisherConfig& cfg) {
    using A = AccumT<T>;
    const std::size_t d = cfg.dim;
    const std::size_t m = std::size_t(v.rows());
    const A lambda_inv = A(1) / A(cfg.lambda);
    const A mm = A(cfg.m);
    std::vector<A> w(m * d), qa(m);
    for (std::size_t i = 0; i < m; ++i) {
      T* gi = v.data() + i * d;  // raw gradient; overwritten only at the end
      A* wi = w.data() + i * d;
      for (std::size_t k = 0; k < d; ++k) wi[k] = lambda_inv * A(gi[k]);
      detail::apply_row_corrections(w.data(), d, qa.data(), 0, i, gi, wi);
      qa[i] = mm + detail::dot_mixed(wi, gi, d);
      for (std::size_t k = 0; k < d; ++k) gi[k] = T(wi[k]);
      q[Eigen::Index(i)] = T(qa[i]);
      detail::check_denominator(q[Eigen::Index(i)], T(cfg.m), i,
                                "static setup");
    }
  }
};

// One independent full-width estimator per coordinate block; cross-block
// curvature is treated as exactly zero.
template <typename T>
class BlockStaticSketch {
 public:
  static BlockStaticSketch setup(const GradientMatrix<T>& grads,
                                 const FisherConfig& cfg) {
    cfg.validate();
    if (grads.rows() != cfg.m || grads.dim() != cfg.dim)
      throw ValidationError("block sketch: window shape does not match config");
    grads.require_finite();
    BlockStaticSketch s(cfg);
    const std::size_t nb = s.layout_.num_blocks();
    s.blocks_.resize(nb);

    auto build_block = [&](std::size_t b) {
      auto span = s.layout_.block(b);
      GradientMatrix<T> slice(cfg.m, span.size);
      slice.data() = grads.data().middleCols(Eigen::Index(span.begin),
                                             Eigen::Index(span.size));
      FisherConfig bcfg = cfg;
      bcfg.dim = span.size;
      bcfg.block_size = 0;
      s.blocks_[b] = StaticSketch<T>::setup(std::move(slice), bcfg);
    };

    const std::size_t threads = std::min(max_threads(), nb);
    if (threads <= 1) {
      for (std::size_t b = 0; b < nb; ++b) build_block(b);
    } else {
      std::exception_ptr first_error;
      std::vector<std::thread> pool;
      for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back([&, t]() {
          for (std::size_t b = t; b < nb; b += threads) {
            try {
              build_block(b);
            } catch (...) {
              if (!first_error) first_error = std::current_exception();
              return;
            }
          }
        });
      for (auto& th : pool) th.join();
      if (first_error) std::rethrow_exception(first_error);
    }
    return s;
  }

  Vector<T> ihvp(const Eigen::Ref<const Vector<T>>& x) const {
    if (x.size() != Eigen::Index(cfg_.dim))
      throw ValidationError("block ihvp: vector length mismatch");
    Vector<T> y(Eigen::Index(cfg_.dim));
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      auto span = layout_.block(b);
      y.segment(Eigen::Index(span.begin), Eigen::Index(span.size)) =
          blocks_[b].ihvp(
              x.segment(Eigen::Index(span.begin), Eigen::Index(span.size)));
    }
    return y;
  }

  T element(std::size_t i, std::size_t j) const {
    std::size_t bi = layout_.block_of(i);
    if (bi != layout_.block_of(j)) return T(0);
    auto span = layout_.block(bi);
    return blocks_[bi].element(i - span.begin, j - span.begin);
  }

  Vector<T> diag() const {
    Vector<T> out(Eigen::Index(cfg_.dim));
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      auto span = layout_.block(b);
      out.segment(Eigen::Index(span.begin), Eigen::Index(span.size)) =
          blocks_[b].diag();
    }
    return out;
  }

  Vector<T> row_select(std::span<const std::size_t> indices) const {
    Vector<T> e = Vector<T>::Zero(Eigen::Index(cfg_.dim));
    for (std::size_t i : indices) {
      if (i >= cfg_.dim)
        throw ValidationError("row select: index out of range");
      if (e[Eigen::Index(i)] != T(0))
        throw ValidationError("row select: duplicate index");
      e[Eigen::Index(i)] = T(1);
    }
    return ihvp(e);
  }

  std::size_t dim() const { return cfg_.dim; }
  std::size_t window() const { return cfg_.m; }
  const FisherConfig& config() const { return cfg_; }
  const BlockLayout& layout() const { return layout_; }
  const StaticSketch<T>& block(std::size_t b) const { return blocks_.at(b); }

 private:
  explicit BlockStaticSketch(const FisherConfig& cfg)
      : cfg_(cfg), layout_(cfg.dim, cfg.block_size) {}

  FisherConfig cfg_;
  BlockLayout layout_;
  std::vector<StaticSketch<T>> blocks_;
};

}  // namespace mfac

#endif  // MFAC_STATIC_SKETCH_HPP_
