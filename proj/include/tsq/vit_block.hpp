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

#include "tsq/tensor.hpp"

namespace tsq {

/// Shape of the toy pre-norm transformer block.
struct BlockSpec {
  std::size_t embed_dim = 16;
  std::size_t heads = 2;
  std::size_t seq_len = 8;
  std::size_t mlp_ratio = 4;
  std::uint64_t seed = 42;
  float ln_eps = 1e-5f;

  std::size_t head_dim() const { return embed_dim / heads; }
  std::size_t hidden_dim() const { return embed_dim * mlp_ratio; }
  void validate() const;

  friend bool operator==(const BlockSpec&, const BlockSpec&) = default;
};

/// Site names shared by captures, bundles, calibration results and the
/// exporter. Bundle tensor names are "block0.<site>".
namespace site {
inline constexpr const char* ln1_input = "ln1_input";
inline constexpr const char* ln1_output = "ln1_output";
inline constexpr const char* qkv_output = "qkv_output";
inline constexpr const char* query = "query";
inline constexpr const char* key = "key";
inline constexpr const char* value = "value";
inline constexpr const char* attention_logits = "attention_logits";
inline constexpr const char* post_softmax = "post_softmax";
inline constexpr const char* attn_context = "attn_context";
inline constexpr const char* proj_output = "proj_output";
inline constexpr const char* ln2_input = "ln2_input";
inline constexpr const char* ln2_output = "ln2_output";
inline constexpr const char* fc1_output = "fc1_output";
inline constexpr const char* post_gelu = "post_gelu";
inline constexpr const char* fc2_output = "fc2_output";
inline constexpr const char* block_output = "block_output";

inline constexpr const char* qkv_weights = "qkv_weights";
inline constexpr const char* proj_weights = "proj_weights";
inline constexpr const char* fc1_weights = "fc1_weights";
inline constexpr const char* fc2_weights = "fc2_weights";
}  // namespace site

inline constexpr const char* kBlockPrefix = "block0.";

/// Every activation the FP forward pass can capture, in execution order.
const std::vector<std::string>& capture_sites();

/// "block0." + site.
std::string bundle_name(const std::string& site);

struct BlockWeights {
  Tensor ln1_gamma, ln1_beta;
  Tensor qkv_weight, qkv_bias;    // (d, 3d), (3d)
  Tensor proj_weight, proj_bias;  // (d, d), (d)
  Tensor ln2_gamma, ln2_beta;
  Tensor fc1_weight, fc1_bias;  // (d, hidden), (hidden)
  Tensor fc2_weight, fc2_bias;  // (hidden, d), (d)
};

/// Matrices uniform in [-0.5, 0.5] / sqrt(d), biases uniform in
/// [-0.05, 0.05], LayerNorm gamma = 1 and beta = 0. Reproducible from the
/// seed on every platform.
BlockWeights init_block_weights(const BlockSpec& spec);

/// Weight tensors under "block0.<param>" names, e.g. "block0.qkv.weight".
void add_weights_to_bundle(const BlockWeights& w, TensorBundle& bundle);
BlockWeights weights_from_bundle(const TensorBundle& bundle, const BlockSpec& spec);

/// Seeded (n, d) input: standard normal with a few channels scaled up to
/// mimic the outlier channels seen at LayerNorm inputs.
Tensor synthetic_input(const BlockSpec& spec, std::uint64_t seed, std::size_t outlier_channels = 2,
                       float outlier_gain = 40.0f);

// Building blocks shared by the FP and quantized pipelines. Accumulation
// runs left to right in double and rounds to float once per output.

/// (rows, inner) x (inner, cols) -> (rows, cols), plus optional bias.
std::vector<float> matmul(std::span<const float> a, std::span<const float> b, std::size_t rows, std::size_t inner,
                          std::size_t cols, std::span<const float> bias = {});
/// LayerNorm over the last axis of a (rows, dim) buffer.
std::vector<float> layer_norm(std::span<const float> x, std::size_t rows, std::size_t dim,
                              std::span<const float> gamma, std::span<const float> beta, float eps);
void softmax_rows_inplace(std::span<float> x, std::size_t row_len);
float gelu(float x);

/// Attention logits for one sample: q, k are (n, d); output (h, n, n),
/// already divided by sqrt(head_dim).
std::vector<float> attention_logits(std::span<const float> q, std::span<const float> k, const BlockSpec& spec);
/// probs (h, n, n) times v (n, d) -> context (n, d).
std::vector<float> attention_context(std::span<const float> probs, std::span<const float> v, const BlockSpec& spec);

/// FP32 forward of one sample x of shape (n, d). When `capture` is set, all
/// capture_sites() tensors are stored under bundle_name(site).
Tensor fp_forward(const BlockSpec& spec, const BlockWeights& w, const Tensor& x, TensorBundle* capture = nullptr);

/// Forward over a (S, n, d) batch; captures are stacked along a leading
/// sample axis.
Tensor fp_forward_batch(const BlockSpec& spec, const BlockWeights& w, const Tensor& batch,
                        TensorBundle* capture = nullptr);

/// Stacks seeded synthetic inputs into (S, n, d).
Tensor synthetic_batch(const BlockSpec& spec, std::uint64_t seed, std::size_t samples);

/// Sample `i` of a stacked tensor, without the leading axis.
Tensor sample_slice(const Tensor& stacked, std::size_t i);
Tensor stack_samples(const std::vector<Tensor>& samples);

/// FNV-1a over the raw bytes of the shape and float data.
std::uint64_t tensor_digest(const Tensor& t);

}  // namespace tsq
