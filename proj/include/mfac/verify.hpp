// mfac/verify.hpp

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

#ifndef MFAC_VERIFY_HPP_
#define MFAC_VERIFY_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mfac::verify {

// One cross-check: pass iff value <= tolerance. Values are deterministic
// given (sizes, lambda, seed), so reports are byte-stable.
struct CheckResult {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct VerifyReport {
  std::vector<CheckResult> checks;
  bool all_pass() const;
};

// Full cross-equivalence suite (static vs dynamic vs dense oracles) on a
// generated instance. d is capped by the dense-oracle guard.
VerifyReport verify_instance(std::size_t d, std::size_t m, double lambda,
                             std::uint64_t seed);

// Structural checks on a saved sketch file (static or dynamic, f64 or f32):
// load validity, q positivity, finiteness, diagonal consistency, linearity.
VerifyReport verify_sketch_file(const std::filesystem::path& p);

// CSV: check, value, tolerance, status.
void write_verify_csv(const std::filesystem::path& p,
                      const VerifyReport& report);

}  // namespace mfac::verify

#endif  // MFAC_VERIFY_HPP_
