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

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tsq/tensor.hpp"

namespace tsq {

/// Contents of `manifest.json` in a bundle directory. The manifest is the
/// last file a producer writes, so its presence marks a complete bundle.
struct BundleManifest {
  std::string model;
  std::vector<std::string> sites;
  std::uint64_t sample_count = 0;
  std::uint64_t seed = 0;
  /// Tensor name -> file name relative to the bundle directory.
  std::map<std::string, std::string> files;
};

inline constexpr const char* kManifestFile = "manifest.json";

BundleManifest read_manifest(const std::filesystem::path& dir);

/// Loads every file the manifest names. Throws DataError listing all files
/// that are missing on disk, FormatError for malformed manifests.
TensorBundle load_bundle(const std::filesystem::path& dir, BundleManifest* manifest_out = nullptr);

/// Writes each tensor as `<name>.npy` and the manifest last.
void save_bundle(const TensorBundle& bundle, const std::filesystem::path& dir, BundleManifest manifest);

}  // namespace tsq
