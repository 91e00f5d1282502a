// mfac/config.cpp

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

#include "mfac/config.hpp"

#include <cmath>
#include <cstdlib>
#include <thread>

namespace mfac {

std::size_t dtype_size(DType dt) { return dt == DType::f32 ? 4 : 8; }

const char* dtype_name(DType dt) { return dt == DType::f32 ? "f32" : "f64"; }

DType parse_dtype(const std::string& name) {
  if (name == "f32") return DType::f32;
  if (name == "f64") return DType::f64;
  throw ValidationError("unknown dtype '" + name + "' (expected f32 or f64)");
}

void FisherConfig::validate() const {
  if (m < 1) throw ValidationError("config: window size m must be >= 1");
  if (dim < 1) throw ValidationError("config: dimension must be >= 1");
  if (!std::isfinite(lambda) || lambda <= 0.0)
    throw ValidationError("config: dampening lambda must be finite and > 0");
  if (block_size > dim)
    throw ValidationError("config: block_size " + std::to_string(block_size) +
                          " exceeds dimension " + std::to_string(dim));
}

std::size_t max_threads() {
  if (const char* env = std::getenv("MFAC_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<std::size_t>(v);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

BlockLayout::BlockLayout(std::size_t dim, std::size_t block_size)
    : dim_(dim), block_size_(block_size == 0 ? dim : block_size) {
  if (dim_ < 1) throw ValidationError("block layout: dimension must be >= 1");
  if (block_size_ > dim_)
    throw ValidationError("block layout: block_size exceeds dimension");
  num_blocks_ = (dim_ + block_size_ - 1) / block_size_;
}

BlockLayout::Span BlockLayout::block(std::size_t b) const {
  if (b >= num_blocks_)
    throw ValidationError("block layout: block index out of range");
  std::size_t begin = b * block_size_;
  std::size_t size = (b + 1 == num_blocks_) ? dim_ - begin : block_size_;
  return {begin, size};
}

std::size_t BlockLayout::block_of(std::size_t coord) const {
  if (coord >= dim_)
    throw ValidationError("block layout: coordinate out of range");
  return coord / block_size_;
}

}  // namespace mfac
