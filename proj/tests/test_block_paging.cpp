// tests/test_block_paging.cpp

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

#include <doctest.h>

#include "mfac/oracle.hpp"
#include "mfac/paging.hpp"
#include "mfac/static_sketch.hpp"
#include "mfac/synth.hpp"
#include "test_support.hpp"

using namespace mfac;

namespace {

FisherConfig make_cfg(std::size_t m, std::size_t d, double lambda,
                      std::size_t block = 0) {
  FisherConfig cfg;
  cfg.m = m;
  cfg.dim = d;
  cfg.lambda = lambda;
  cfg.block_size = block;
  return cfg;
}

}  // namespace

TEST_SUITE("block_paging") {

TEST_CASE("a gradient supported on block 0 leaves block 1 at lambda^-1 I") {
  // d=4, two blocks of 2; only coordinates 0..1 carry signal.
  GradientMatrix<double> g(2, 4);
  g.data() << 1.0, 0.5, 0.0, 0.0, -0.5, 2.0, 0.0, 0.0;
  auto cfg = make_cfg(2, 4, 0.5, 2);
  auto s = BlockStaticSketch<double>::setup(g, cfg);
  CHECK(s.element(2, 2) == 2.0);
  CHECK(s.element(3, 3) == 2.0);
  CHECK(s.element(2, 3) == 0.0);
  Eigen::VectorXd x(4);
  x << 0, 0, 3.0, -1.0;
  Eigen::VectorXd y = s.ihvp(x);
  CHECK(y[2] == 6.0);
  CHECK(y[3] == -2.0);
}

TEST_CASE("one full-width block reproduces the plain sketch exactly") {
  synth::GenSpec spec;
  spec.d = 37;
  spec.m = 11;
  spec.seed = 5;
  auto g = synth::generate_gradients(spec);
  auto full = StaticSketch<double>::setup(g, make_cfg(spec.m, spec.d, 1e-3));
  auto blocked =
      BlockStaticSketch<double>::setup(g, make_cfg(spec.m, spec.d, 1e-3, 37));
  REQUIRE(blocked.layout().num_blocks() == 1);
  CHECK(blocked.block(0).v() == full.v());
  CHECK(blocked.block(0).q() == full.q());
  Eigen::VectorXd x = synth::generate_vector(spec.d, 8);
  CHECK(blocked.ihvp(x) == full.ihvp(x));
  CHECK(blocked.element(3, 5) == full.element(3, 5));
  CHECK(blocked.diag() == full.diag());
}

TEST_CASE("cross-block elements are exactly zero") {
  synth::GenSpec spec;
  spec.d = 30;
  spec.m = 6;
  spec.seed = 17;
  auto g = synth::generate_gradients(spec);
  auto s = BlockStaticSketch<double>::setup(g, make_cfg(6, 30, 1e-2, 7));
  REQUIRE(s.layout().num_blocks() == 5);  // 7+7+7+7+2
  CHECK(s.element(0, 7) == 0.0);
  CHECK(s.element(13, 14) == 0.0);
  CHECK(s.element(28, 1) == 0.0);
  CHECK(s.element(29, 28) != 0.0);
}

TEST_CASE("blocks match per-block dense oracles") {
  synth::GenSpec spec;
  spec.d = 44;
  spec.m = 10;
  spec.seed = 31;
  auto g = synth::generate_gradients(spec);
  const double lambda = 1e-2;
  auto s = BlockStaticSketch<double>::setup(g, make_cfg(10, 44, lambda, 16));
  Eigen::VectorXd x = synth::generate_vector(44, 3);
  Eigen::VectorXd y = s.ihvp(x);
  for (std::size_t b = 0; b < s.layout().num_blocks(); ++b) {
    auto span = s.layout().block(b);
    GradientMatrix<double> slice(10, span.size);
    slice.data() = g.data().middleCols(Eigen::Index(span.begin),
                                       Eigen::Index(span.size));
    Eigen::MatrixXd inv = oracle::dense_inverse_woodbury(slice, lambda);
    Eigen::VectorXd want = oracle::dense_ihvp(
        inv, x.segment(Eigen::Index(span.begin), Eigen::Index(span.size)));
    Eigen::VectorXd got =
        y.segment(Eigen::Index(span.begin), Eigen::Index(span.size));
    CHECK(test::rel_l2(got, want) <= 1e-9);
    // Diagonal agrees entrywise too.
    Eigen::VectorXd dg = s.diag();
    for (std::size_t i = 0; i < span.size; ++i)
      CHECK(std::abs(dg[Eigen::Index(span.begin + i)] -
                     inv(Eigen::Index(i), Eigen::Index(i))) <= 1e-10);
  }
}

TEST_CASE("row selection respects block structure") {
  synth::GenSpec spec;
  spec.d = 12;
  spec.m = 5;
  spec.seed = 13;
  auto g = synth::generate_gradients(spec);
  auto s = BlockStaticSketch<double>::setup(g, make_cfg(5, 12, 1.0, 4));
  Eigen::VectorXd col = s.row_select(std::vector<std::size_t>{6});
  for (std::size_t j = 0; j < 12; ++j)
    CHECK(col[Eigen::Index(j)] ==
          doctest::Approx(s.element(j, 6)).epsilon(1e-12));
  // Indicators outside block 1 contribute nothing to block 1.
  CHECK(col[0] == 0.0);
  CHECK(col[11] == 0.0);
}

TEST_CASE("paged setup is bit-identical to the in-memory path") {
  synth::GenSpec spec;
  spec.d = 64;
  spec.m = 24;
  spec.seed = 3;
  auto g = synth::generate_gradients(spec);
  auto cfg = make_cfg(spec.m, spec.d, 1e-5);
  auto reference = StaticSketch<double>::setup(g, cfg);
  for (std::size_t pages : {std::size_t(1), std::size_t(2), std::size_t(3),
                            std::size_t(5), std::size_t(24)}) {
    auto paged = paged_static_setup(g, cfg, pages);
    CHECK(paged.sketch.v() == reference.v());
    CHECK(paged.sketch.q() == reference.q());
  }
}

TEST_CASE("paged transfer counts follow the quadratic schedule") {
  synth::GenSpec spec;
  spec.d = 16;
  spec.m = 20;
  spec.seed = 9;
  auto g = synth::generate_gradients(spec);
  auto cfg = make_cfg(spec.m, spec.d, 1e-2);
  for (std::size_t k : {std::size_t(1), std::size_t(2), std::size_t(4),
                        std::size_t(8)}) {
    auto paged = paged_static_setup(g, cfg, k);
    CHECK(paged.stats.pages == k);
    CHECK(paged.stats.page_loads == k + k * (k - 1) / 2);
    CHECK(paged.stats.page_stores == k);
    CHECK(paged.stats.peak_resident == (k == 1 ? 2 : 3));
  }
}

TEST_CASE("paged setup rejects bad budgets and page counts") {
  synth::GenSpec spec;
  spec.d = 8;
  spec.m = 6;
  spec.seed = 2;
  auto g = synth::generate_gradients(spec);
  auto cfg = make_cfg(6, 8, 1e-2);
  CHECK_THROWS_AS(paged_static_setup(g, cfg, 0), ValidationError);
  CHECK_THROWS_AS(paged_static_setup(g, cfg, 7), ValidationError);
  CHECK_THROWS_AS(paged_static_setup(g, cfg, 2, 0), ValidationError);
  CHECK_THROWS_AS(paged_static_setup(g, cfg, 2, 2), ValidationError);
  CHECK_THROWS_AS(paged_static_setup(g, cfg, 1, 1), ValidationError);
  CHECK_NOTHROW(paged_static_setup(g, cfg, 1, 2));
  CHECK_NOTHROW(paged_static_setup(g, cfg, 2, 3));
}

TEST_CASE("MFAC_THREADS caps the block worker pool") {
  // Functional check only: results identical regardless of the cap.
  synth::GenSpec spec;
  spec.d = 40;
  spec.m = 8;
  spec.seed = 21;
  auto g = synth::generate_gradients(spec);
  auto cfg = make_cfg(8, 40, 1e-3, 10);
  auto baseline = BlockStaticSketch<double>::setup(g, cfg);
  setenv("MFAC_THREADS", "3", 1);
  auto threaded = BlockStaticSketch<double>::setup(g, cfg);
  unsetenv("MFAC_THREADS");
  for (std::size_t b = 0; b < baseline.layout().num_blocks(); ++b) {
    CHECK(threaded.block(b).v() == baseline.block(b).v());
    CHECK(threaded.block(b).q() == baseline.block(b).q());
  }
}

}  // TEST_SUITE
