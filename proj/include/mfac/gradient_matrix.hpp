// mfac/gradient_matrix.hpp

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

#ifndef MFAC_GRADIENT_MATRIX_HPP_
#define MFAC_GRADIENT_MATRIX_HPP_

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mfac/common.hpp"

namespace mfac {

// A window of per-sample gradients, one row each, stored row-major so a row
// is a contiguous d-vector.
template <typename T>
class GradientMatrix {
 public:
  GradientMatrix() = default;
  GradientMatrix(std::size_t rows, std::size_t dim)
      : data_(RowMatrix<T>::Zero(static_cast<Eigen::Index>(rows),
                                 static_cast<Eigen::Index>(dim))) {}
  explicit GradientMatrix(RowMatrix<T> data) : data_(std::move(data)) {}

  std::size_t rows() const { return static_cast<std::size_t>(data_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(data_.cols()); }

  RowMatrix<T>& data() { return data_; }
  const RowMatrix<T>& data() const { return data_; }

  // Optional provenance: one sample identifier per row when non-empty.
  std::vector<std::uint64_t> sample_ids;

  // Throws ValidationError naming the first non-finite entry.
  void require_finite() const {
    for (Eigen::Index r = 0; r < data_.rows(); ++r)
      for (Eigen::Index c = 0; c < data_.cols(); ++c)
        if (!std::isfinite(static_cast<double>(data_(r, c))))
          throw ValidationError("gradients: non-finite entry at row " +
                                std::to_string(r) + ", col " +
                                std::to_string(c));
  }

 private:
  RowMatrix<T> data_;
};

// Means of consecutive groups of `batch` rows. rows() must be a positive
// multiple of batch. Group sums are accumulated in f64 for both dtypes and
// rounded once on store.
template <typename T>
GradientMatrix<T> batch_average_gradients(const GradientMatrix<T>& g,
                                          std::size_t batch) {
  if (batch < 1) throw ValidationError("batch average: batch must be >= 1");
  if (g.rows() == 0 || g.rows() % batch != 0)
    throw ValidationError("batch average: row count " +
                          std::to_string(g.rows()) +
                          " is not a positive multiple of batch " +
                          std::to_string(batch));
  const std::size_t groups = g.rows() / batch;
  GradientMatrix<T> out(groups, g.dim());
  Eigen::VectorXd acc(static_cast<Eigen::Index>(g.dim()));
  for (std::size_t b = 0; b < groups; ++b) {
    acc.setZero();
    for (std::size_t r = 0; r < batch; ++r)
      acc += g.data()
                 .row(static_cast<Eigen::Index>(b * batch + r))
                 .transpose()
                 .template cast<double>();
    out.data().row(static_cast<Eigen::Index>(b)) =
        (acc / static_cast<double>(batch)).transpose().template cast<T>();
  }
  return out;
}

}  // namespace mfac

#endif  // MFAC_GRADIENT_MATRIX_HPP_
