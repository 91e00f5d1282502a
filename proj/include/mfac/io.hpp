// mfac/io.hpp

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

#ifndef MFAC_IO_HPP_
#define MFAC_IO_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "mfac/config.hpp"
#include "mfac/gradient_matrix.hpp"

namespace mfac::io {

// mfacbin layout, all integers little-endian:
//   byte 0-3  magic "MFAC"
//   byte 4    format version (1)
//   byte 5    dtype code (0 = f32, 1 = f64)
//   byte 6    kind (0 = plain matrix, 1 = tagged container)
//   byte 7    reserved, zero
// Plain matrix: u64 rows, u64 cols, then rows*cols values row-major.
// Container:    u64 section count, u64 reserved zero, then sections of
//   [4-byte tag][u8 dtype][3 reserved][u64 rows][u64 cols][payload].
inline constexpr std::array<char, 4> kMagic{'M', 'F', 'A', 'C'};
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::uint8_t kKindMatrix = 0;
inline constexpr std::uint8_t kKindContainer = 1;

// CSV gradient files are a desk-scale convenience only.
inline constexpr std::uint64_t kCsvMaxElements = 1000000;

struct MatrixInfo {
  DType dtype;
  std::uint64_t rows;
  std::uint64_t cols;
};

using AnyMatrix = std::variant<RowMatrix<float>, RowMatrix<double>>;

void save_matrix(const std::filesystem::path& p, const RowMatrix<float>& m);
void save_matrix(const std::filesystem::path& p, const RowMatrix<double>& m);

MatrixInfo peek_matrix(const std::filesystem::path& p);
AnyMatrix load_matrix(const std::filesystem::path& p);

// Loads a plain matrix converting to T (f32 payloads widen bit-exactly to
// f64; f64 payloads round to nearest when narrowed).
template <typename T>
RowMatrix<T> load_matrix_as(const std::filesystem::path& p) {
  AnyMatrix any = load_matrix(p);
  if (auto* f = std::get_if<RowMatrix<float>>(&any))
    return f->template cast<T>();
  return std::get<RowMatrix<double>>(any).template cast<T>();
}

// Gradient windows. Loading validates finiteness (with row/col locations)
// and rejects empty matrices.
template <typename T>
GradientMatrix<T> load_gradients(const std::filesystem::path& p) {
  GradientMatrix<T> g(load_matrix_as<T>(p));
  if (g.rows() == 0 || g.dim() == 0)
    throw ValidationError("gradients: file holds an empty matrix");
  g.require_finite();
  return g;
}

template <typename T>
void save_gradients(const std::filesystem::path& p, const GradientMatrix<T>& g) {
  save_matrix(p, g.data());
}

// One gradient per line, comma-separated; width fixed by the first line.
// Rejected when rows*cols would exceed kCsvMaxElements.
RowMatrix<double> load_csv_matrix(const std::filesystem::path& p);

template <typename T>
GradientMatrix<T> load_gradients_csv(const std::filesystem::path& p) {
  GradientMatrix<T> g(load_csv_matrix(p).cast<T>());
  if (g.rows() == 0 || g.dim() == 0)
    throw ValidationError("gradients: CSV holds an empty matrix");
  g.require_finite();
  return g;
}

// Weight vectors travel as 1 x d plain matrices (a d x 1 file is accepted).
Eigen::VectorXd load_weights(const std::filesystem::path& p);
void save_weights(const std::filesystem::path& p, const Eigen::VectorXd& w);

// Tagged container used by sketch serialization. Section payload dtypes may
// differ from the file-level dtype (metadata sections stay f64).
class Container {
 public:
  DType dtype = DType::f64;  // scalar type of the object being stored

  template <typename T>
  void add(const std::string& tag, const RowMatrix<T>& m);
  bool has(const std::string& tag) const;
  template <typename T>
  RowMatrix<T> get(const std::string& tag) const;  // dtype must match exactly

  void save(const std::filesystem::path& p) const;
  static Container load(const std::filesystem::path& p);

 private:
  struct Section {
    std::array<char, 4> tag;
    DType dtype;
    std::uint64_t rows;
    std::uint64_t cols;
    std::vector<unsigned char> payload;
  };
  std::vector<Section> sections_;
  const Section& find(const std::string& tag) const;
  static std::array<char, 4> pack_tag(const std::string& tag);
};

// Fixed-format float for deterministic CSV reports: round-trip exact
// (max_digits10), '.' decimal point regardless of locale.
std::string csv_double(double v);

}  // namespace mfac::io

#endif  // MFAC_IO_HPP_
