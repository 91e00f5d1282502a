// mfac/paging.hpp

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

#ifndef MFAC_PAGING_HPP_
#define MFAC_PAGING_HPP_

#include <algorithm>
#include <utility>
#include <vector>

#include "mfac/static_sketch.hpp"

namespace mfac {

// Two-tier setup emulation: the window lives in a slow tier split into
// `pages` contiguous row ranges; at most `budget_pages` page-sized buffers
// may be resident in the fast tier at once. The schedule visits every
// finished page once per page under construction, so transfers grow as
// O(pages^2) while residency stays at two pages plus the in-progress buffer.
struct PagingStats {
  std::size_t pages = 0;
  std::size_t page_loads = 0;
  std::size_t page_stores = 0;
  std::size_t peak_resident = 0;
};

template <typename T>
struct PagedSetup {
  StaticSketch<T> sketch;
  PagingStats stats;
};

namespace detail {

// Counts fast-tier residency; every load/alloc must fit the budget.
class FastTierMeter {
 public:
  FastTierMeter(std::size_t budget, PagingStats* stats)
      : budget_(budget), stats_(stats) {}
  void acquire() {
    ++resident_;
    if (resident_ > budget_)
      throw ValidationError("paging: fast-tier budget exceeded");
    if (resident_ > stats_->peak_resident) stats_->peak_resident = resident_;
  }
  void release() { --resident_; }

 private:
  std::size_t budget_;
  std::size_t resident_ = 0;
  PagingStats* stats_;
};

}  // namespace detail

template <typename T>
PagedSetup<T> paged_static_setup(const GradientMatrix<T>& grads,
                                 const FisherConfig& cfg, std::size_t pages,
                                 std::size_t budget_pages = 3) {
  cfg.validate();
  if (grads.rows() != cfg.m || grads.dim() != cfg.dim)
    throw ValidationError("paged setup: window shape does not match config");
  grads.require_finite();
  if (pages < 1 || pages > cfg.m)
    throw ValidationError("paged setup: page count must be in [1, m]");
  if (budget_pages < 1)
    throw ValidationError("paged setup: budget below one page");
  const std::size_t required = pages == 1 ? 2 : 3;
  if (budget_pages < required)
    throw ValidationError(
        "paged setup: schedule needs " + std::to_string(required) +
        " resident pages (two pages plus the in-progress buffer), budget is " +
        std::to_string(budget_pages));

  using A = AccumT<T>;
  const std::size_t d = cfg.dim;
  const std::size_t m = cfg.m;
  const A lambda_inv = A(1) / A(cfg.lambda);
  const A mm = A(m);

  // Balanced contiguous split: the first m % pages pages get one extra row.
  std::vector<std::pair<std::size_t, std::size_t>> extents;  // (begin, rows)
  {
    std::size_t base = m / pages, rem = m % pages, begin = 0;
    for (std::size_t p = 0; p < pages; ++p) {
      std::size_t rows = base + (p < rem ? 1 : 0);
      extents.emplace_back(begin, rows);
      begin += rows;
    }
  }

  PagedSetup<T> out;
  out.stats.pages = pages;
  detail::FastTierMeter meter(budget_pages, &out.stats);

  RowMatrix<T> v(static_cast<Eigen::Index>(m),
                 static_cast<Eigen::Index>(d));  // slow-tier result
  Vector<T> q(static_cast<Eigen::Index>(m));
  // While the build is in flight the slow tier also carries the extended-
  // precision rows; corrections read these, never the rounded result, so a
  // row rounds exactly once and the bits match the in-memory recursion.
  std::vector<A> w(m * d), qa(m);

  for (std::size_t pi = 0; pi < pages; ++pi) {
    const auto [begin_i, rows_i] = extents[pi];

    meter.acquire();  // raw gradients of page i
    ++out.stats.page_loads;
    RowMatrix<T> raw = grads.data().middleRows(Eigen::Index(begin_i),
                                               Eigen::Index(rows_i));

    // In-progress buffer for page i: extended accumulator plus the rounded
    // rows that will land in the result.
    meter.acquire();
    std::vector<A> acc(rows_i * d);
    RowMatrix<T> buf{Eigen::Index(rows_i), Eigen::Index(d)};
    for (std::size_t j = 0; j < rows_i; ++j)
      for (std::size_t k = 0; k < d; ++k)
        acc[j * d + k] = lambda_inv * A(raw(Eigen::Index(j), Eigen::Index(k)));

    // Contributions of all finished pages, ascending, so each target row sees
    // corrections in the same global row order as the in-memory setup.
    for (std::size_t pt = 0; pt < pi; ++pt) {
      const auto [begin_t, rows_t] = extents[pt];
      meter.acquire();
      ++out.stats.page_loads;
      const std::vector<A> wt(w.begin() + begin_t * d,
                              w.begin() + (begin_t + rows_t) * d);
      for (std::size_t j = 0; j < rows_i; ++j)
        detail::apply_row_corrections(wt.data(), d, qa.data(), begin_t,
                                      rows_t, raw.data() + j * d,
                                      acc.data() + j * d);
      meter.release();
    }

    // In-page recursion; later rows read the earlier accumulator rows.
    for (std::size_t j = 0; j < rows_i; ++j) {
      A* yj = acc.data() + j * d;
      T* vj = buf.data() + j * d;
      const T* gj = raw.data() + j * d;
      detail::apply_row_corrections(acc.data(), d, qa.data(), begin_i, j, gj,
                                    yj);
      const std::size_t global = begin_i + j;
      qa[global] = mm + detail::dot_mixed(yj, gj, d);
      for (std::size_t k = 0; k < d; ++k) vj[k] = T(yj[k]);
      q[Eigen::Index(global)] = T(qa[global]);
      detail::check_denominator(q[Eigen::Index(global)], T(m), global,
                                "paged setup");
    }

    ++out.stats.page_stores;
    std::copy(acc.begin(), acc.end(), w.begin() + begin_i * d);
    v.middleRows(Eigen::Index(begin_i), Eigen::Index(rows_i)) = buf;
    meter.release();  // buffer
    meter.release();  // raw page
  }

  out.sketch = StaticSketch<T>::from_parts(std::move(v), std::move(q), cfg);
  return out;
}

}  // namespace mfac

#endif  // MFAC_PAGING_HPP_
