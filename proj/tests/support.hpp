// Copyright 2026 The tsq Authors. All Rights Reserved.
//
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

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tsq/rng.hpp"
#include "tsq/tensor.hpp"

namespace tsq::testing {

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("tsq_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Tensor normal_tensor(Rng& rng, Shape shape, double stddev = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.mutable_data()) v = static_cast<float>(rng.normal() * stddev);
  return t;
}

/// Rows of softmax(N(0, logit_std^2) logits), computed in double.
inline Tensor softmax_of_gaussian(Rng& rng, std::size_t rows, std::size_t len, double logit_std) {
  Tensor t({rows, len});
  std::vector<double> z(len);
  for (std::size_t r = 0; r < rows; ++r) {
    double m = -1e300;
    for (auto& v : z) {
      v = rng.normal() * logit_std;
      m = std::max(m, v);
    }
    double sum = 0.0;
    for (auto& v : z) sum += (v = std::exp(v - m));
    for (std::size_t i = 0; i < len; ++i) t[r * len + i] = static_cast<float>(z[i] / sum);
  }
  return t;
}

}  // namespace tsq::testing
