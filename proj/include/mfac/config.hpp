// mfac/config.hpp

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

#ifndef MFAC_CONFIG_HPP_
#define MFAC_CONFIG_HPP_

#include <cstddef>
#include <cstdint>
#include <string>

#include "mfac/common.hpp"

namespace mfac {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

std::size_t dtype_size(DType dt);
const char* dtype_name(DType dt);
DType parse_dtype(const std::string& name);  // "f32" | "f64"

// Parameters of the dampened empirical-Fisher estimate
//   F = lambda * I + (1/m) * sum_i g_i g_i^T
// over a window of m gradients in dimension `dim`.
struct FisherConfig {
  std::size_t m = 0;
  double lambda = 1e-5;    // dampening; default follows the pruning recipes
  std::size_t dim = 0;
  std::size_t block_size = 0;  // 0 selects one full-width block
  DType dtype = DType::f64;

  std::size_t effective_block_size() const {
    return block_size == 0 ? dim : block_size;
  }

  // Throws ValidationError unless m >= 1, dim >= 1, lambda finite and > 0,
  // block_size <= dim.
  void validate() const;
};

// Partition of [0, dim) into contiguous blocks of width block_size; the
// trailing block may be shorter. block_size 0 means one full-width block.
class BlockLayout {
 public:
  BlockLayout(std::size_t dim, std::size_t block_size);

  struct Span {
    std::size_t begin;
    std::size_t size;
  };

  std::size_t dim() const { return dim_; }
  std::size_t block_size() const { return block_size_; }
  std::size_t num_blocks() const { return num_blocks_; }
  Span block(std::size_t b) const;
  std::size_t block_of(std::size_t coord) const;

 private:
  std::size_t dim_;
  std::size_t block_size_;
  std::size_t num_blocks_;
};

}  // namespace mfac

#endif  // MFAC_CONFIG_HPP_
