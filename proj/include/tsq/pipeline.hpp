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
#include <map>
#include <string>
#include <vector>

#include "tsq/calib_result.hpp"
#include "tsq/int_softmax.hpp"
#include "tsq/search.hpp"
#include "tsq/vit_block.hpp"

namespace tsq {

enum class PipelineMode { fake_quant, integer_path };

const char* to_string(PipelineMode m);
PipelineMode pipeline_mode_from_string(const std::string& s);

/// Every quantized tensor of the block, in execution order. Weight sites
/// and the key / value operands are quantized as the second matmul operand.
const std::vector<std::string>& quant_sites();
bool is_weight_site(const std::string& site);

struct SiteSpec {
  Scheme scheme = Scheme::uniform;
  int bits = 8;
  V2sfKind v2sf_kind = V2sfKind::softmax;
  int v2sf_shift = 4;

  friend bool operator==(const SiteSpec&, const SiteSpec&) = default;
};

struct QuantPipelineSpec {
  std::map<std::string, SiteSpec> sites;
  PipelineMode mode = PipelineMode::integer_path;
  /// Replaces the integer softmax with the float one in both modes; used to
  /// isolate the codec algebra when cross-checking the two modes.
  bool float_softmax = false;
  IntSoftmaxConfig softmax;

  /// LN inputs O-2SF, post-softmax and post-GeLU V-2SF, everything else
  /// uniform. Weight sites use weight_bits, all others activation_bits.
  static QuantPipelineSpec make_default(int weight_bits, int activation_bits,
                                        PipelineMode mode = PipelineMode::integer_path);

  /// Throws ValidationError unless every quant site has exactly one entry
  /// with a scheme the site supports.
  void validate() const;
  const SiteSpec& at(const std::string& site) const;
};

/// Site schemes and bit widths as recorded in a calibration result.
QuantPipelineSpec pipeline_from_calibration(const CalibrationResult& calib, PipelineMode mode);

nlohmann::json pipeline_spec_to_json(const QuantPipelineSpec& p);
/// Applies the keys present in `j` on top of `base`.
QuantPipelineSpec pipeline_spec_from_json(const nlohmann::json& j, QuantPipelineSpec base);

/// Counts matmuls by accumulator type. In integer_path mode a float
/// accumulation is an assertion failure and is counted as such.
struct MatmulAudit {
  bool integer_only = false;
  std::size_t integer_matmuls = 0;
  std::size_t float_matmuls = 0;
  std::size_t float_in_accumulator_assertions = 0;
};

struct QuantForwardResult {
  Tensor output;
  /// Dequantized value of every quant site, under bundle_name(site).
  TensorBundle sites;
  /// Float output of every matmul (qkv_output, attention_logits,
  /// attn_context, proj_output, fc1_output, fc2_output).
  TensorBundle preactivations;
  MatmulAudit audit;
};

/// One sample (n, d) through the quantized block. Throws DataError when
/// the calibration misses a site or disagrees with the pipeline spec, and
/// NumericalError on integer accumulator overflow.
QuantForwardResult quant_forward(const BlockSpec& spec, const BlockWeights& w, const QuantPipelineSpec& pipeline,
                                 const CalibrationResult& calib, const Tensor& x);

struct SiteError {
  std::string site;
  Scheme scheme = Scheme::uniform;
  int bits = 0;
  double mse = 0.0;
  double sqnr_db = 0.0;
  std::size_t count = 0;
};

struct EvalReport {
  PipelineMode mode = PipelineMode::integer_path;
  std::size_t samples = 0;
  /// One entry per quant site, in quant_sites() order.
  std::vector<SiteError> sites;
  double output_mse = 0.0;
  double output_max_abs_error = 0.0;
  double output_sqnr_db = 0.0;
  MatmulAudit audit;
  IntExpToleranceReport softmax_tolerance;
};

/// Runs quant_forward and fp_forward over an (S, n, d) batch. Site errors
/// compare each dequantized site with the FP value of the same site.
EvalReport evaluate_pipeline(const BlockSpec& spec, const BlockWeights& w, const QuantPipelineSpec& pipeline,
                             const CalibrationResult& calib, const Tensor& batch);

/// Matmul pre-activations compared between two pipeline runs.
struct CrossModeReport {
  std::size_t compared = 0;
  std::size_t mismatched = 0;
  double max_abs_difference = 0.0;
};

/// Runs both modes with float softmax and compares every matmul output.
CrossModeReport cross_mode_check(const BlockSpec& spec, const BlockWeights& w, const QuantPipelineSpec& pipeline,
                                 const CalibrationResult& calib, const Tensor& batch);

/// Structured report; deterministic for identical inputs.
nlohmann::json eval_report_to_json(const EvalReport& r);
std::string eval_report_table(const EvalReport& r);

}  // namespace tsq
