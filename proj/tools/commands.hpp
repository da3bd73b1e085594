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
#include <iosfwd>
#include <optional>
#include <string>

#include <json.hpp>

#include "tsq/pipeline.hpp"
#include "tsq/search.hpp"
#include "tsq/vit_block.hpp"

namespace tsq::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kData = 3, kNumerical = 4 };

/// Effective settings of one run: defaults, then the config file, then
/// command-line flags. Echoed to <out>/config.json.
struct RunConfig {
  std::string command;
  bool synthetic = false;
  std::optional<std::filesystem::path> bundle;
  std::optional<std::filesystem::path> calibration;
  std::filesystem::path out;
  std::uint64_t seed = 0;
  std::size_t samples = 32;
  BlockSpec block;
  SearchConfig search;
  QuantPipelineSpec pipeline;
};

nlohmann::json run_config_to_json(const RunConfig& c);

/// Entry point shared by the binary and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tsq::cli
