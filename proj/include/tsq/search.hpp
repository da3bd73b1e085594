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
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tsq/o2sf.hpp"
#include "tsq/quant.hpp"
#include "tsq/tensor.hpp"
#include "tsq/v2sf.hpp"

namespace tsq {

enum class MetricKind { plain_mse, grad_weighted };
enum class Scheme { uniform, v2sf, o2sf };

const char* to_string(MetricKind m);
const char* to_string(Scheme s);
MetricKind metric_from_string(const std::string& s);
Scheme scheme_from_string(const std::string& s);

struct SearchConfig {
  int rounds = 3;
  int candidates = 100;   // N
  int max_shift = 6;      // N'
  double space_factor = 1.2;
  int weight_bits = 8;
  int activation_bits = 8;
  MetricKind metric = MetricKind::plain_mse;
  std::uint64_t seed = 0;
  /// 0 = resolve from $TSQ_THREADS / hardware. Never affects results.
  int threads = 0;

  void validate() const;
  friend bool operator==(const SearchConfig&, const SearchConfig&) = default;
};

/// N values (i / N) * upper for i = 1..N with upper = factor * max / 2^(b-1).
/// A zero max yields the single candidate {1}.
std::vector<float> candidate_grid(float max_val, int bits, int n, double space_factor);

struct MetricInput {
  const Tensor& fp_output;
  const Tensor& quant_output;
  const Tensor* grad = nullptr;
};

/// sum w * (fp - quant)^2 with w = grad^2 (grad_weighted) or 1 (plain_mse).
/// Throws ShapeError on mismatched shapes and DataError when grad_weighted
/// is requested without a gradient.
double hessian_metric(const MetricInput& in, MetricKind kind);

/// True when every gradient entry is zero, which makes the weighted metric
/// identically zero.
bool gradient_is_degenerate(const Tensor& grad);

/// Computes a layer's output from (optionally quantized) weights and
/// activations. Must be deterministic.
using LayerEvaluator = std::function<Tensor(const Tensor* weights, const Tensor& activations)>;

struct ActivationScheme {
  Scheme scheme = Scheme::uniform;
  V2sfKind v2sf_kind = V2sfKind::softmax;
  int v2sf_shift = 4;
  std::size_t channel_axis = 0;
};

using ActivationParams = std::variant<QuantParams, V2sfParams, O2sfParams>;

struct LayerCalibration {
  std::string layer;
  Scheme scheme = Scheme::uniform;
  /// Sites whose parameters this layer determines; weight_site is empty
  /// for layers without a weight operand.
  std::string activation_site;
  std::string weight_site;
  std::size_t channel_axis = 0;
  std::optional<QuantParams> weight;
  ActivationParams activation;
  /// Metric at the returned parameters.
  double metric = 0.0;
  /// Metric after each alternating round.
  std::vector<double> round_metrics;
  std::vector<std::string> warnings;
};

struct LayerSearchInput {
  std::string name;
  LayerEvaluator evaluate;
  const Tensor* weights = nullptr;
  const Tensor* activations = nullptr;
  const Tensor* grad = nullptr;
  ActivationScheme scheme;
  /// Overrides cfg.weight_bits, e.g. when the second operand is itself an
  /// activation such as the attention keys.
  std::optional<int> weight_bits;
};

/// Alternating grid search over the weight scale and the activation
/// parameters of one layer. Each round sweeps the weight grid with the
/// activation fixed, then the activation candidates with the weight fixed.
/// For O-2SF the channels are partitioned first; s_o and s_n are swept on
/// their own grids in all but the last round, and the last round pairs each
/// s_o candidate with its shift candidates s_o / 2^k, k in [0, N'].
/// Ties go to the smaller scale. Non-finite metrics are skipped; a sweep
/// with no finite candidate throws NumericalError.
LayerCalibration search_layer(const LayerSearchInput& in, const SearchConfig& cfg);

/// Per-tensor best scales under plain MSE of the tensor itself.
QuantParams best_uniform_params(const Tensor& t, int bits, const SearchConfig& cfg);
V2sfParams best_v2sf_params(const Tensor& t, V2sfKind kind, int bits, int shift, const SearchConfig& cfg);

/// Range the V-2SF s_s grid must span: the positive max, and for GeLU also
/// the negative extent scaled by the ratio of the full code range to the
/// small-region range (negatives are only representable in region 0).
float v2sf_grid_max(const Tensor& t, const V2sfParams& p);

/// Fake-quantizes a tensor with any activation parameter set.
Tensor apply_activation_params(const Tensor& t, const ActivationParams& p, std::size_t channel_axis);

}  // namespace tsq
