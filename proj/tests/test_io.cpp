// tests/test_io.cpp

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

#include <cstring>
#include <fstream>
#include <random>

#include "mfac/io.hpp"
#include "mfac/synth.hpp"
#include "test_support.hpp"

using namespace mfac;

namespace {

std::vector<unsigned char> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(bool(in));
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                    std::istreambuf_iterator<char>());
}

void dump(const std::filesystem::path& p,
          const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            std::streamsize(bytes.size()));
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("mfacbin header bytes are pinned") {
  // 2 x 3 f64 matrix: "MFAC", version 1, dtype 1, kind 0, reserved 0,
  // rows/cols as little-endian u64.
  RowMatrix<double> m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  auto p = test::temp_path("header.mfacbin");
  io::save_matrix(p, m);
  auto bytes = slurp(p);
  REQUIRE(bytes.size() == 24 + 6 * 8);
  CHECK(std::memcmp(bytes.data(), "MFAC", 4) == 0);
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 1);
  CHECK(bytes[6] == 0);
  CHECK(bytes[7] == 0);
  const unsigned char rows_le[8] = {2, 0, 0, 0, 0, 0, 0, 0};
  const unsigned char cols_le[8] = {3, 0, 0, 0, 0, 0, 0, 0};
  CHECK(std::memcmp(bytes.data() + 8, rows_le, 8) == 0);
  CHECK(std::memcmp(bytes.data() + 16, cols_le, 8) == 0);
  double first;
  std::memcpy(&first, bytes.data() + 24, 8);
  CHECK(first == 1.0);
}

TEST_CASE("round-trip is bit-identical for both dtypes") {
  std::mt19937_64 rng = test::rng_for(5);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SUBCASE("f64") {
    RowMatrix<double> m(7, 11);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = gauss(rng);
    auto p = test::temp_path("rt64.mfacbin");
    io::save_matrix(p, m);
    auto back = std::get<RowMatrix<double>>(io::load_matrix(p));
    CHECK(std::memcmp(back.data(), m.data(),
                      std::size_t(m.size()) * sizeof(double)) == 0);
  }
  SUBCASE("f32") {
    RowMatrix<float> m(5, 4);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = float(gauss(rng));
    auto p = test::temp_path("rt32.mfacbin");
    io::save_matrix(p, m);
    auto back = std::get<RowMatrix<float>>(io::load_matrix(p));
    CHECK(std::memcmp(back.data(), m.data(),
                      std::size_t(m.size()) * sizeof(float)) == 0);
  }
}

TEST_CASE("f32 payload widens bit-exactly under an f64 load") {
  RowMatrix<float> m(3, 3);
  m << 0.1f, -2.5f, 3e-8f, 1.0f, -1.0f, 65504.0f, 0.0f, -0.0f, 42.0f;
  auto p = test::temp_path("widen.mfacbin");
  io::save_matrix(p, m);
  RowMatrix<double> wide = io::load_matrix_as<double>(p);
  for (Eigen::Index r = 0; r < 3; ++r)
    for (Eigen::Index c = 0; c < 3; ++c)
      CHECK(wide(r, c) == double(m(r, c)));
}

TEST_CASE("malformed mfacbin files are rejected") {
  RowMatrix<double> m(2, 2);
  m << 1, 2, 3, 4;
  auto p = test::temp_path("bad.mfacbin");
  io::save_matrix(p, m);
  auto good = slurp(p);

  SUBCASE("missing file") {
    CHECK_THROWS_AS(io::load_matrix(test::temp_path("nonexistent")), IoError);
  }
  SUBCASE("bad magic") {
    auto b = good;
    b[0] = 'X';
    dump(p, b);
    CHECK_THROWS_AS(io::load_matrix(p), IoError);
  }
  SUBCASE("bad version") {
    auto b = good;
    b[4] = 9;
    dump(p, b);
    CHECK_THROWS_AS(io::load_matrix(p), IoError);
  }
  SUBCASE("bad dtype code") {
    auto b = good;
    b[5] = 7;
    dump(p, b);
    CHECK_THROWS_AS(io::load_matrix(p), IoError);
  }
  SUBCASE("truncated payload") {
    auto b = good;
    b.resize(b.size() - 9);
    dump(p, b);
    CHECK_THROWS_AS(io::load_matrix(p), IoError);
  }
  SUBCASE("trailing bytes") {
    auto b = good;
    b.push_back(0);
    dump(p, b);
    CHECK_THROWS_AS(io::load_matrix(p), IoError);
  }
  SUBCASE("truncated header") {
    auto b = good;
    b.resize(10);
    dump(p, b);
    CHECK_THROWS_AS(io::load_matrix(p), IoError);
  }
}

TEST_CASE("gradient loading validates content") {
  auto p = test::temp_path("grad.mfacbin");

  SUBCASE("non-finite entries carry their location") {
    RowMatrix<double> m(2, 2);
    m << 1, 2, std::numeric_limits<double>::infinity(), 4;
    io::save_matrix(p, m);
    try {
      io::load_gradients<double>(p);
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      std::string msg = e.what();
      CHECK(msg.find("row 1") != std::string::npos);
      CHECK(msg.find("col 0") != std::string::npos);
    }
  }
  SUBCASE("empty matrix rejected") {
    io::save_matrix(p, RowMatrix<double>(0, 4));
    CHECK_THROWS_AS(io::load_gradients<double>(p), ValidationError);
  }
}

TEST_CASE("CSV gradients: exact parse of a hand-written file") {
  auto p = test::temp_path("grad.csv");
  {
    std::ofstream out(p);
    out << "1.5,-2.25,3\n"
        << " 0.125 , 4 ,-8\n";
  }
  auto g = io::load_gradients_csv<double>(p);
  REQUIRE(g.rows() == 2);
  REQUIRE(g.dim() == 3);
  CHECK(g.data()(0, 0) == 1.5);
  CHECK(g.data()(0, 1) == -2.25);
  CHECK(g.data()(0, 2) == 3.0);
  CHECK(g.data()(1, 0) == 0.125);
  CHECK(g.data()(1, 1) == 4.0);
  CHECK(g.data()(1, 2) == -8.0);
}

TEST_CASE("CSV gradients: ragged rows and garbage are rejected") {
  auto p = test::temp_path("ragged.csv");
  {
    std::ofstream out(p);
    out << "1,2,3\n1,2\n";
  }
  CHECK_THROWS_AS(io::load_csv_matrix(p), IoError);
  {
    std::ofstream out(p, std::ios::trunc);
    out << "1,abc,3\n";
  }
  CHECK_THROWS_AS(io::load_csv_matrix(p), IoError);
}

TEST_CASE("CSV gradients: desk-scale size guard") {
  // 2000 columns x 501 rows crosses the 1e6-element limit.
  auto p = test::temp_path("big.csv");
  {
    std::ofstream out(p);
    std::string row;
    row.reserve(4000);
    for (int c = 0; c < 2000; ++c) row += c ? ",1" : "1";
    row += '\n';
    for (int r = 0; r < 501; ++r) out << row;
  }
  CHECK_THROWS_AS(io::load_csv_matrix(p), ValidationError);
}

TEST_CASE("weights round-trip as a 1 x d matrix") {
  Eigen::VectorXd w = synth::generate_weights(9, 4);
  auto p = test::temp_path("weights.mfacbin");
  io::save_weights(p, w);
  Eigen::VectorXd back = io::load_weights(p);
  CHECK(back == w);

  // A d x 1 layout is accepted too.
  RowMatrix<double> col(9, 1);
  col.col(0) = w;
  io::save_matrix(p, col);
  CHECK(io::load_weights(p) == w);

  // But a genuine matrix is not a weight vector.
  RowMatrix<double> m(2, 3);
  m.setZero();
  io::save_matrix(p, m);
  CHECK_THROWS_AS(io::load_weights(p), ValidationError);
}

TEST_CASE("container round-trips mixed-dtype sections") {
  io::Container c;
  c.dtype = DType::f32;
  RowMatrix<float> v(3, 5);
  v.setRandom();
  RowMatrix<double> meta(1, 4);
  meta << 3, 5, 0, 1e-5;
  c.add("V", v);
  c.add("CFG", meta);
  auto p = test::temp_path("container.mfacbin");
  c.save(p);

  auto back = io::Container::load(p);
  CHECK(back.dtype == DType::f32);
  CHECK(back.has("V"));
  CHECK(back.has("CFG"));
  CHECK(!back.has("q"));
  CHECK(back.get<float>("V") == v);
  CHECK(back.get<double>("CFG") == meta);
  CHECK_THROWS_AS(back.get<double>("V"), IoError);
  CHECK_THROWS_AS(back.get<float>("none"), IoError);
  CHECK_THROWS_AS(back.get<float>("toolongtag"), ValidationError);

  // Plain loaders refuse containers and vice versa.
  CHECK_THROWS_AS(io::load_matrix(p), IoError);
  RowMatrix<double> m(1, 1);
  m << 2.0;
  auto p2 = test::temp_path("plain.mfacbin");
  io::save_matrix(p2, m);
  CHECK_THROWS_AS(io::Container::load(p2), IoError);
}

TEST_CASE("csv_double formats round-trip exactly") {
  for (double v : {0.1, -1e300, 3.5, 1e-17, 0.0, 12345.6789}) {
    std::string s = io::csv_double(v);
    CHECK(std::stod(s) == v);
    CHECK(s.find(',') == std::string::npos);
  }
  CHECK(io::csv_double(-0.0) == "0");
}

}  // TEST_SUITE
