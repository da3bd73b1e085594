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

#include <filesystem>
#include <string>
#include <vector>

#include "tsq/tensor.hpp"

namespace tsq {

/// Reads a `.npy` v1.0 file holding little-endian '<f4' or '<f8' data in C
/// order. f64 payloads are narrowed to float with round-to-nearest.
/// Throws FormatError for anything outside that subset and ValidationError
/// for NaN/Inf values.
Tensor load_tensor(const std::filesystem::path& path);

/// Writes '<f4', C order, with a numpy-compatible header padded to a
/// 64-byte boundary. Output is byte-identical to `numpy.save` for f32.
void save_tensor(const Tensor& t, const std::filesystem::path& path);

/// In-memory forms of the above.
Tensor parse_npy(const std::vector<char>& bytes);
std::vector<char> serialize_npy(const Tensor& t);

}  // namespace tsq
