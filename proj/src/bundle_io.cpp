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

#include "tsq/bundle_io.hpp"

#include <fstream>
#include <json.hpp>

#include "tsq/errors.hpp"
#include "tsq/npy.hpp"

namespace tsq {

using nlohmann::json;

BundleManifest read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / kManifestFile;
  std::ifstream in(path);
  if (!in) throw DataError("bundle has no manifest: " + path.string());
  BundleManifest m;
  try {
    const json j = json::parse(in);
    m.model = j.value("model", "");
    m.sites = j.value("sites", std::vector<std::string>{});
    m.sample_count = j.value("sample_count", std::uint64_t{0});
    m.seed = j.value("seed", std::uint64_t{0});
    m.files = j.at("files").get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return m;
}

TensorBundle load_bundle(const std::filesystem::path& dir, BundleManifest* manifest_out) {
  const BundleManifest m = read_manifest(dir);
  std::string missing;
  for (const auto& [name, file] : m.files) {
    if (!std::filesystem::exists(dir / file)) missing += (missing.empty() ? "" : ", ") + file;
  }
  if (!missing.empty()) throw DataError("bundle files missing: " + missing);

  TensorBundle bundle;
  for (const auto& [name, file] : m.files) bundle.insert(name, load_tensor(dir / file));
  bundle.validate();
  if (manifest_out) *manifest_out = m;
  return bundle;
}

void save_bundle(const TensorBundle& bundle, const std::filesystem::path& dir, BundleManifest manifest) {
  std::filesystem::create_directories(dir);
  manifest.files.clear();
  for (const auto& [name, t] : bundle) {
    const std::string file = name + ".npy";
    save_tensor(t, dir / file);
    manifest.files[name] = file;
  }
  const json j = {{"model", manifest.model},
                  {"sites", manifest.sites},
                  {"sample_count", manifest.sample_count},
                  {"seed", manifest.seed},
                  {"files", manifest.files}};
  std::ofstream out(dir / kManifestFile, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest in " + dir.string());
  out << j.dump(2) << '\n';
}

}  // namespace tsq
