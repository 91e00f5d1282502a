// mfac/dynamic_sketch.hpp

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

#ifndef MFAC_DYNAMIC_SKETCH_HPP_
#define MFAC_DYNAMIC_SKETCH_HPP_

#include <cmath>
#include <filesystem>
#include <string>
#include <utility>

#include "mfac/config.hpp"
#include "mfac/gradient_matrix.hpp"
#include "mfac/io.hpp"

namespace mfac {

// Scratch buffers for repeated queries. p = G x, q = the forward-substituted
// coefficients, c = q^T B. Reusing one instance across steps avoids
// per-query allocation; contents are overwritten on every call.
template <typename T>
struct IhvpWork {
  Vector<T> p;
  Vector<T> q;
  Vector<T> c;
};

struct WindowState {
  std::size_t filled = 0;
  std::size_t next_slot = 0;
  std::size_t capacity = 0;
};

// Rolling-window estimator: keeps the raw gradients G (capacity m rows),
// their Gram matrix GGT, and the coefficient factors
//   D upper triangular, D_rc = lambda^-1 GGT_rc
//                              - sum_{t<r} D_tr / (s + D_tt) * D_tc,
//   B lower triangular,  row i = lambda^-1 e_i
//                              - sum_{t<i} D_ti / (s + D_tt) * row t,
// where s is the number of occupied slots. Queries cost O(dm + m^2);
// replacing slot k recomputes column k of D above the pivot plus all rows
// >= k of D and B, O((m-k) m^2) worst case.
//
// A partial window (s < m) scales the Fisher average by s, so growing the
// window changes every coefficient; pushes into a non-full window trigger a
// full rebuild unless deferred with refresh_coeffs = false.
template <typename T>
class DynamicSketch {
 public:
  DynamicSketch() = default;

  // Empty window with reserved capacity.
  explicit DynamicSketch(const FisherConfig& cfg) { init(cfg); }

  // Convenience: seed with rows(grads) <= m gradients and build coefficients
  // once. Arithmetic is identical to pushing each row with deferred refresh
  // and refreshing at the end.
  static DynamicSketch setup(const GradientMatrix<T>& grads,
                             const FisherConfig& cfg) {
    DynamicSketch s(cfg);
    if (grads.rows() < 1)
      throw ValidationError("dynamic sketch: empty gradient window");
    if (grads.rows() > cfg.m)
      throw ValidationError("dynamic sketch: window has " +
                            std::to_string(grads.rows()) +
                            " rows, capacity m = " + std::to_string(cfg.m));
    if (grads.dim() != cfg.dim)
      throw ValidationError("dynamic sketch: gradient dim " +
                            std::to_string(grads.dim()) + " != config dim " +
                            std::to_string(cfg.dim));
    for (std::size_t r = 0; r < grads.rows(); ++r)
      s.push(grads.data().row(Eigen::Index(r)).transpose(), false);
    s.refresh();
    return s;
  }

  // Inserts g at the next slot (FIFO once full) and returns the slot used.
  // With refresh_coeffs = false the raw window and Gram matrix are updated
  // but D/B are left stale; queries then throw until refresh() or a
  // refreshing update runs.
  std::size_t push(const Eigen::Ref<const Vector<T>>& g,
                   bool refresh_coeffs = true) {
    Vector<T> p;
    return push_core(g, refresh_coeffs, p);
  }

  // Overwrites an occupied slot in place; the window size and slot cursor do
  // not move. Coefficients are always refreshed. If the refresh trips the
  // denominator guard the previous state is restored before rethrowing.
  void replace(std::size_t slot, const Eigen::Ref<const Vector<T>>& g) {
    require_init();
    if (slot >= filled_)
      throw ValidationError("dynamic replace: slot " + std::to_string(slot) +
                            " is not occupied (filled = " +
                            std::to_string(filled_) + ")");
    Vector<T> p;
    apply_row(slot, g, /*grow=*/false, /*refresh=*/true, p);
  }

  // Rebuilds D and B for the occupied prefix.
  void refresh() {
    require_init();
    require_window("dynamic refresh");
    rebuild(0);
    coeffs_current_ = true;
  }

  // Finv x over the current window.
  Vector<T> ihvp(const Eigen::Ref<const Vector<T>>& x,
                 IhvpWork<T>* work = nullptr) const {
    require_init();
    require_window("dynamic ihvp");
    if (x.size() != Eigen::Index(cfg_.dim))
      throw ValidationError("dynamic ihvp: vector length " +
                            std::to_string(x.size()) + " != dim " +
                            std::to_string(cfg_.dim));
    require_current();
    Vector<T> local_p;
    Vector<T>& p = work ? work->p : local_p;
    row_dots(x.data(), p);
    return ihvp_from_p(p, x, work);
  }

  // push(g) followed by ihvp(g), sharing the row dots p = G g between the
  // Gram refresh and the query; bitwise identical to the two-call sequence.
  Vector<T> update_and_ihvp(const Eigen::Ref<const Vector<T>>& g,
                            IhvpWork<T>* work = nullptr) {
    Vector<T> local_p;
    Vector<T>& p = work ? work->p : local_p;
    push_core(g, /*refresh=*/true, p);
    return ihvp_from_p(p, g, work);
  }

  WindowState window_state() const { return {filled_, next_slot_, cfg_.m}; }
  bool coeffs_current() const { return coeffs_current_; }
  std::size_t dim() const { return cfg_.dim; }
  std::size_t capacity() const { return cfg_.m; }
  std::size_t filled() const { return filled_; }
  const FisherConfig& config() const { return cfg_; }
  const RowMatrix<T>& gradients() const { return g_; }
  const RowMatrix<T>& gram() const { return ggt_; }
  const RowMatrix<T>& d_matrix() const { return d_; }
  const RowMatrix<T>& b_matrix() const { return b_; }

  void save(const std::filesystem::path& p) const {
    require_init();
    require_window("dynamic save");
    require_current();
    io::Container c;
    c.dtype = cfg_.dtype;
    c.add("G", g_);
    c.add("GGT", ggt_);
    c.add("D", d_);
    c.add("B", b_);
    RowMatrix<double> meta(1, 4);
    meta << double(cfg_.m), double(cfg_.dim), double(cfg_.block_size),
        cfg_.lambda;
    c.add("CFG", meta);
    RowMatrix<double> cnt(1, 2);
    cnt << double(filled_), double(next_slot_);
    c.add("CNT", cnt);
    c.save(p);
  }

  static DynamicSketch load(const std::filesystem::path& p) {
    io::Container c = io::Container::load(p);
    if ((c.dtype == DType::f32) != std::is_same_v<T, float>)
      throw ValidationError("dynamic sketch: file dtype is " +
                            std::string(dtype_name(c.dtype)));
    RowMatrix<double> meta = c.get<double>("CFG");
    if (meta.rows() != 1 || meta.cols() != 4)
      throw ValidationError("dynamic sketch: malformed CFG section");
    FisherConfig cfg;
    cfg.m = std::size_t(meta(0, 0));
    cfg.dim = std::size_t(meta(0, 1));
    cfg.block_size = std::size_t(meta(0, 2));
    cfg.lambda = meta(0, 3);
    cfg.dtype = c.dtype;
    DynamicSketch s(cfg);
    RowMatrix<double> cnt = c.get<double>("CNT");
    if (cnt.rows() != 1 || cnt.cols() != 2)
      throw ValidationError("dynamic sketch: malformed CNT section");
    const std::size_t filled = std::size_t(cnt(0, 0));
    const std::size_t next_slot = std::size_t(cnt(0, 1));
    if (filled < 1 || filled > cfg.m || next_slot >= cfg.m)
      throw ValidationError("dynamic sketch: window counters out of range");
    s.g_ = c.get<T>("G");
    s.ggt_ = c.get<T>("GGT");
    s.d_ = c.get<T>("D");
    s.b_ = c.get<T>("B");
    const auto cap = Eigen::Index(cfg.m);
    if (s.g_.rows() != cap || s.g_.cols() != Eigen::Index(cfg.dim))
      throw ValidationError("dynamic sketch: G shape does not match config");
    for (const RowMatrix<T>* mat : {&s.ggt_, &s.d_, &s.b_})
      if (mat->rows() != cap || mat->cols() != cap)
        throw ValidationError(
            "dynamic sketch: coefficient shape does not match config");
    if (!s.g_.allFinite() || !s.ggt_.allFinite() || !s.d_.allFinite() ||
        !s.b_.allFinite())
      throw ValidationError("dynamic sketch: non-finite entry in file");
    s.filled_ = filled;
    s.next_slot_ = next_slot;
    const T scale = T(filled);
    for (std::size_t r = 0; r < filled; ++r)
      detail::check_denominator(scale + s.d_(Eigen::Index(r), Eigen::Index(r)),
                                scale, r, "dynamic sketch");
    s.coeffs_current_ = true;
    return s;
  }

 private:
  FisherConfig cfg_;
  RowMatrix<T> g_;
  RowMatrix<T> ggt_;
  RowMatrix<T> d_;
  RowMatrix<T> b_;
  std::size_t filled_ = 0;
  std::size_t next_slot_ = 0;
  bool coeffs_current_ = true;

  void init(const FisherConfig& cfg) {
    cfg.validate();
    if ((cfg.dtype == DType::f32) != std::is_same_v<T, float>)
      throw ValidationError("dynamic sketch: scalar type does not match "
                            "config dtype");
    cfg_ = cfg;
    g_ = RowMatrix<T>::Zero(Eigen::Index(cfg.m), Eigen::Index(cfg.dim));
    ggt_ = RowMatrix<T>::Zero(Eigen::Index(cfg.m), Eigen::Index(cfg.m));
    d_ = RowMatrix<T>::Zero(Eigen::Index(cfg.m), Eigen::Index(cfg.m));
    b_ = RowMatrix<T>::Zero(Eigen::Index(cfg.m), Eigen::Index(cfg.m));
  }

  void require_init() const {
    if (cfg_.m == 0)
      throw ValidationError("dynamic sketch: not initialized");
  }

  void require_window(const char* who) const {
    if (filled_ == 0)
      throw ValidationError(std::string(who) + ": the window is empty");
  }

  void require_current() const {
    if (!coeffs_current_)
      throw ValidationError(
          "dynamic sketch: coefficients are stale; refresh() or push with "
          "refresh_coeffs = true first");
  }

  void check_gradient(const Eigen::Ref<const Vector<T>>& g) const {
    if (g.size() != Eigen::Index(cfg_.dim))
      throw ValidationError("dynamic push: gradient length " +
                            std::to_string(g.size()) + " != dim " +
                            std::to_string(cfg_.dim));
    for (Eigen::Index i = 0; i < g.size(); ++i)
      if (!std::isfinite(double(g[i])))
        throw ValidationError("dynamic push: non-finite gradient entry at " +
                              std::to_string(i));
  }

  // p_r = row_r . x over the occupied prefix, same kernel and row order as
  // the Gram refresh, so the query and update paths agree bitwise.
  void row_dots(const T* x, Vector<T>& p) const {
    const auto n = Eigen::Index(filled_);
    p.resize(n);
    for (Eigen::Index r = 0; r < n; ++r)
      p[r] = detail::dot(g_.data() + std::size_t(r) * cfg_.dim, x, cfg_.dim);
  }

  std::size_t push_core(const Eigen::Ref<const Vector<T>>& g, bool refresh,
                        Vector<T>& p) {
    require_init();
    const std::size_t slot = next_slot_;
    apply_row(slot, g, filled_ < cfg_.m, refresh, p);
    next_slot_ = (slot + 1) % cfg_.m;
    return slot;
  }

  void apply_row(std::size_t slot, const Eigen::Ref<const Vector<T>>& g,
                 bool grow, bool refresh, Vector<T>& p) {
    check_gradient(g);
    const std::size_t old_filled = filled_;
    const bool old_current = coeffs_current_;
    const Vector<T> old_row = g_.row(Eigen::Index(slot)).transpose();
    const Vector<T> old_gram_row = ggt_.row(Eigen::Index(slot)).transpose();
    const Vector<T> old_gram_col = ggt_.col(Eigen::Index(slot));
    RowMatrix<T> old_d;
    RowMatrix<T> old_b;
    if (refresh) {
      old_d = d_;
      old_b = b_;
    }

    g_.row(Eigen::Index(slot)) = g.transpose();
    if (grow) ++filled_;
    row_dots(g_.data() + slot * cfg_.dim, p);
    for (Eigen::Index r = 0; r < Eigen::Index(filled_); ++r) {
      ggt_(Eigen::Index(slot), r) = p[r];
      ggt_(r, Eigen::Index(slot)) = p[r];
    }
    if (!refresh) {
      coeffs_current_ = false;
      return;
    }
    try {
      // Growth rescales the window average; stale coefficients cannot seed a
      // pivot-local rebuild.
      rebuild((grow || !coeffs_current_) ? 0 : slot);
      coeffs_current_ = true;
    } catch (...) {
      g_.row(Eigen::Index(slot)) = old_row.transpose();
      ggt_.row(Eigen::Index(slot)) = old_gram_row.transpose();
      ggt_.col(Eigen::Index(slot)) = old_gram_col;
      d_ = std::move(old_d);
      b_ = std::move(old_b);
      filled_ = old_filled;
      coeffs_current_ = old_current;
      throw;
    }
  }

  void rebuild(std::size_t k) {
    rebuild_d(k);
    rebuild_b(k);
  }

  // Rows < k keep their entries outside column k; only column k above the
  // pivot and the full tails of rows >= k depend on the changed slot.
  void rebuild_d(std::size_t k) {
    const std::size_t n = filled_;
    const std::size_t cap = cfg_.m;
    const T s = T(n);
    const T li = T(1) / T(cfg_.lambda);
    for (std::size_t r = 0; r < k; ++r) {
      T acc = li * ggt_(Eigen::Index(r), Eigen::Index(k));
      for (std::size_t t = 0; t < r; ++t) {
        const T coeff = d_(Eigen::Index(t), Eigen::Index(r)) /
                        (s + d_(Eigen::Index(t), Eigen::Index(t)));
        acc -= coeff * d_(Eigen::Index(t), Eigen::Index(k));
      }
      d_(Eigen::Index(r), Eigen::Index(k)) = acc;
    }
    for (std::size_t r = k; r < n; ++r) {
      T* drow = d_.data() + r * cap;
      const T* grow_row = ggt_.data() + r * cap;
      for (std::size_t c = r; c < n; ++c) drow[c] = li * grow_row[c];
      for (std::size_t t = 0; t < r; ++t) {
        const T coeff = d_(Eigen::Index(t), Eigen::Index(r)) /
                        (s + d_(Eigen::Index(t), Eigen::Index(t)));
        const T* dtrow = d_.data() + t * cap;
        for (std::size_t c = r; c < n; ++c) drow[c] -= coeff * dtrow[c];
      }
      detail::check_denominator(s + drow[r], s, r, "dynamic setup");
    }
  }

  void rebuild_b(std::size_t k) {
    const std::size_t n = filled_;
    const std::size_t cap = cfg_.m;
    const T s = T(n);
    const T li = T(1) / T(cfg_.lambda);
    for (std::size_t i = k; i < n; ++i) {
      T* brow = b_.data() + i * cap;
      for (std::size_t j = 0; j < i; ++j) brow[j] = T(0);
      brow[i] = li;
      for (std::size_t t = 0; t < i; ++t) {
        const T coeff = -(d_(Eigen::Index(t), Eigen::Index(i)) /
                          (s + d_(Eigen::Index(t), Eigen::Index(t))));
        detail::axpy(coeff, b_.data() + t * cap, brow, t + 1);
      }
    }
  }

  // Forward substitution through D, then y = lambda^-1 x - G^T (q^T B)^T.
  Vector<T> ihvp_from_p(const Vector<T>& p,
                        const Eigen::Ref<const Vector<T>>& x,
                        IhvpWork<T>* work) const {
    const auto n = Eigen::Index(filled_);
    const std::size_t cap = cfg_.m;
    const T s = T(filled_);
    const T li = T(1) / T(cfg_.lambda);
    Vector<T> local_q;
    Vector<T> local_c;
    Vector<T>& q = work ? work->q : local_q;
    Vector<T>& c = work ? work->c : local_c;
    q = li * p;
    q[0] /= s + d_(0, 0);
    for (Eigen::Index i = 1; i < n; ++i) {
      const T qprev = q[i - 1];
      const T* drow = d_.data() + std::size_t(i - 1) * cap;
      for (Eigen::Index r = i; r < n; ++r) q[r] -= qprev * drow[r];
      q[i] /= s + d_(i, i);
    }
    c.setZero(n);
    for (Eigen::Index t = 0; t < n; ++t)
      detail::axpy(q[t], b_.data() + std::size_t(t) * cap, c.data(),
                   std::size_t(t) + 1);
    // Row-major G makes G^T c a per-row axpy; tiling keeps each slice of y
    // cache-resident across all rows (G streams once, y is touched once).
    // Per element the additions keep their row order, so the result is
    // bit-identical to the untiled loop.
    Vector<T> y = li * x;
    constexpr std::size_t kTile = 1 << 13;
    for (std::size_t col = 0; col < cfg_.dim; col += kTile) {
      const std::size_t len = std::min(kTile, cfg_.dim - col);
      for (Eigen::Index j = 0; j < n; ++j)
        detail::axpy(-c[j], g_.data() + std::size_t(j) * cfg_.dim + col,
                     y.data() + col, len);
    }
    return y;
  }
};

}  // namespace mfac

#endif  // MFAC_DYNAMIC_SKETCH_HPP_
