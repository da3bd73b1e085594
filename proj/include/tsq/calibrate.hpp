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
#include <string>
#include <vector>

#include "tsq/calib_result.hpp"
#include "tsq/pipeline.hpp"
#include "tsq/search.hpp"
#include "tsq/tensor.hpp"
#include "tsq/vit_block.hpp"

namespace tsq {

/// One searched layer: its activation operand, optional second operand
/// and the output the metric is measured on.
struct LayerPlan {
  std::string name;
  std::string activation_site;
  std::string weight_site;  // empty when the layer has no second operand
  std::string output_site;
};

/// Calibration order. Together the layers cover every quant_sites() entry.
const std::vector<LayerPlan>& calibration_layers();

/// Bundle name of the tensor holding a weight site, e.g. "block0.qkv.weight".
std::string weight_tensor_name(const std::string& weight_site);

/// Names calibrate_model reads from a bundle; gradients only when the
/// metric needs them.
std::vector<std::string> required_tensors(MetricKind metric);
std::vector<std::string> required_gradients();

/// Seeded stand-in for an exported bundle: block weights, the FP captures
/// of `samples` synthetic inputs (S, ...) and, optionally, seeded normal
/// gradients for every layer output.
TensorBundle synthetic_calibration_bundle(const BlockSpec& spec, std::size_t samples, std::uint64_t seed,
                                          bool with_gradients);

/// Runs search_layer for every layer in calibration order. Throws DataError
/// listing every missing tensor, or every missing gradient when the metric
/// is grad_weighted.
CalibrationResult calibrate_model(const TensorBundle& bundle, const BlockSpec& spec,
                                  const QuantPipelineSpec& pipeline, const SearchConfig& cfg);

}  // namespace tsq
