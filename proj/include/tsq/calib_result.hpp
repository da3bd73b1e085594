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
#include <string>
#include <vector>

#include <json.hpp>

#include "tsq/search.hpp"
#include "tsq/vit_block.hpp"

namespace tsq {

/// Calibrated parameters for every quantization site of a block.
struct CalibrationResult {
  static constexpr int kFormatVersion = 1;

  int format_version = kFormatVersion;
  BlockSpec block;
  SearchConfig config;
  std::size_t samples = 0;
  /// Topological order.
  std::vector<LayerCalibration> layers;

  /// Parameters of an activation or weight site. Throws DataError when the
  /// site is missing or holds a different parameter type.
  const ActivationParams& activation(const std::string& site) const;
  const QuantParams& uniform(const std::string& site) const;
  const V2sfParams& v2sf(const std::string& site) const;
  const O2sfParams& o2sf(const std::string& site) const;
  std::size_t channel_axis(const std::string& site) const;
  bool has_site(const std::string& site) const;
};

/// Exact "%a" rendering of a float or double, parsed back bit-exactly.
std::string hex_float(double v);
double parse_hex_float(const std::string& s);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

nlohmann::json search_config_to_json(const SearchConfig& cfg);
SearchConfig search_config_from_json(const nlohmann::json& j, SearchConfig base = {});
nlohmann::json block_spec_to_json(const BlockSpec& spec);
BlockSpec block_spec_from_json(const nlohmann::json& j, BlockSpec base = {});

/// Canonical serialization: keys sorted, scales as hex literals, O-2SF
/// masks as base64 of the packed bits.
std::string serialize_calibration(const CalibrationResult& r);
/// Throws FormatError for malformed documents or a different format version.
CalibrationResult parse_calibration(const std::string& text);

void save_calibration(const CalibrationResult& r, const std::filesystem::path& path);
CalibrationResult load_calibration(const std::filesystem::path& path);

}  // namespace tsq
