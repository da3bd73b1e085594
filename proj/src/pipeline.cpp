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

#include "tsq/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>

#include "tsq/errors.hpp"

namespace tsq {

const char* to_string(PipelineMode m) { return m == PipelineMode::fake_quant ? "fake_quant" : "integer_path"; }

PipelineMode pipeline_mode_from_string(const std::string& s) {
  if (s == "fake_quant") return PipelineMode::fake_quant;
  if (s == "integer_path") return PipelineMode::integer_path;
  throw ValidationError("unknown pipeline mode '" + s + "' (expected fake_quant or integer_path)");
}

const std::vector<std::string>& quant_sites() {
  static const std::vector<std::string> sites = {
      site::ln1_input,    site::ln1_output,   site::qkv_weights, site::query,       site::key,
      site::attention_logits, site::post_softmax, site::value,   site::attn_context, site::proj_weights,
      site::ln2_input,    site::ln2_output,   site::fc1_weights, site::post_gelu,   site::fc2_weights};
  return sites;
}

bool is_weight_site(const std::string& s) {
  return s == site::qkv_weights || s == site::proj_weights || s == site::fc1_weights || s == site::fc2_weights;
}

QuantPipelineSpec QuantPipelineSpec::make_default(int weight_bits, int activation_bits, PipelineMode mode) {
  QuantPipelineSpec p;
  p.mode = mode;
  for (const auto& s : quant_sites()) {
    SiteSpec ss;
    ss.bits = is_weight_site(s) ? weight_bits : activation_bits;
    if (s == site::ln1_input || s == site::ln2_input) {
      ss.scheme = Scheme::o2sf;
    } else if (s == site::post_softmax) {
      ss.scheme = Scheme::v2sf;
      ss.v2sf_kind = V2sfKind::softmax;
    } else if (s == site::post_gelu) {
      ss.scheme = Scheme::v2sf;
      ss.v2sf_kind = V2sfKind::gelu;
    }
    ss.v2sf_shift = default_v2sf_shift(ss.v2sf_kind);
    p.sites[s] = ss;
  }
  return p;
}

void QuantPipelineSpec::validate() const {
  const auto& all = quant_sites();
  for (const auto& [name, ss] : sites) {
    if (std::find(all.begin(), all.end(), name) == all.end()) {
      throw ValidationError("pipeline names unknown site '" + name + "'");
    }
    const bool ln_input = name == site::ln1_input || name == site::ln2_input;
    if (ss.scheme == Scheme::o2sf && !ln_input) {
      throw ValidationError("site '" + name + "': O-2SF is only supported at LayerNorm inputs");
    }
    if (ss.scheme == Scheme::v2sf) {
      const bool ok = (name == site::post_softmax && ss.v2sf_kind == V2sfKind::softmax) ||
                      (name == site::post_gelu && ss.v2sf_kind == V2sfKind::gelu);
      if (!ok) throw ValidationError("site '" + name + "': V-2SF kind does not match the site");
      V2sfParams{ss.v2sf_kind, ss.bits, ss.v2sf_shift, 1.0f}.validate();
    } else {
      QuantParams{1.0f, 0, ss.bits}.validate();
    }
  }
  for (const auto& s : all) {
    if (!sites.count(s)) throw ValidationError("pipeline has no scheme for site '" + s + "'");
  }
  softmax.validate();
}

const SiteSpec& QuantPipelineSpec::at(const std::string& s) const {
  auto it = sites.find(s);
  if (it == sites.end()) throw ValidationError("pipeline has no scheme for site '" + s + "'");
  return it->second;
}

QuantPipelineSpec pipeline_from_calibration(const CalibrationResult& calib, PipelineMode mode) {
  QuantPipelineSpec p = QuantPipelineSpec::make_default(calib.config.weight_bits, calib.config.activation_bits, mode);
  for (const auto& s : quant_sites()) {
    if (!calib.has_site(s)) throw DataError("calibration has no parameters for site '" + s + "'");
    SiteSpec& ss = p.sites[s];
    if (is_weight_site(s) || s == site::key || s == site::value ||
        std::holds_alternative<QuantParams>(calib.activation(s))) {
      ss.scheme = Scheme::uniform;
      ss.bits = calib.uniform(s).bits;
    } else if (const auto* v = std::get_if<V2sfParams>(&calib.activation(s))) {
      ss.scheme = Scheme::v2sf;
      ss.bits = v->bits;
      ss.v2sf_kind = v->kind;
      ss.v2sf_shift = v->shift;
    } else {
      ss.scheme = Scheme::o2sf;
      ss.bits = calib.o2sf(s).bits;
    }
  }
  return p;
}

nlohmann::json pipeline_spec_to_json(const QuantPipelineSpec& p) {
  nlohmann::json sites = nlohmann::json::object();
  for (const auto& [name, ss] : p.sites) {
    nlohmann::json j{{"scheme", to_string(ss.scheme)}, {"bits", ss.bits}};
    if (ss.scheme == Scheme::v2sf) {
      j["v2sf_kind"] = to_string(ss.v2sf_kind);
      j["v2sf_shift"] = ss.v2sf_shift;
    }
    sites[name] = j;
  }
  return {{"mode", to_string(p.mode)},
          {"float_softmax", p.float_softmax},
          {"sites", sites},
          {"int_softmax",
           {{"coef_a", p.softmax.coef_a},
            {"coef_b", p.softmax.coef_b},
            {"coef_c", p.softmax.coef_c},
            {"frac_bits", p.softmax.frac_bits},
            {"output_bits", p.softmax.output_bits}}}};
}

QuantPipelineSpec pipeline_spec_from_json(const nlohmann::json& j, QuantPipelineSpec p) {
  try {
    if (j.contains("mode")) p.mode = pipeline_mode_from_string(j.at("mode").get<std::string>());
    p.float_softmax = j.value("float_softmax", p.float_softmax);
    if (j.contains("sites")) {
      for (const auto& [name, js] : j.at("sites").items()) {
        SiteSpec ss = p.sites.count(name) ? p.sites.at(name) : SiteSpec{};
        if (js.contains("scheme")) ss.scheme = scheme_from_string(js.at("scheme").get<std::string>());
        ss.bits = js.value("bits", ss.bits);
        if (js.contains("v2sf_kind")) ss.v2sf_kind = v2sf_kind_from_string(js.at("v2sf_kind").get<std::string>());
        ss.v2sf_shift = js.value("v2sf_shift", ss.v2sf_shift);
        p.sites[name] = ss;
      }
    }
    if (j.contains("int_softmax")) {
      const auto& k = j.at("int_softmax");
      p.softmax.coef_a = k.value("coef_a", p.softmax.coef_a);
      p.softmax.coef_b = k.value("coef_b", p.softmax.coef_b);
      p.softmax.coef_c = k.value("coef_c", p.softmax.coef_c);
      p.softmax.frac_bits = k.value("frac_bits", p.softmax.frac_bits);
      p.softmax.output_bits = k.value("output_bits", p.softmax.output_bits);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("pipeline spec: ") + e.what());
  }
  return p;
}

namespace {

// A matmul operand: value = code * scale.
struct Operand {
  std::vector<std::int32_t> codes;
  double scale = 1.0;
};

// Strided multiply-accumulate shared by both arithmetic modes:
// out[r * ldo + c] = sum_k a[r * a_r + k * a_k] * b[k * b_k + c * b_c].
struct Gemm {
  std::size_t rows, inner, cols;
  std::size_t a_r, a_k, b_k, b_c, ldo;
};

Gemm dense(std::size_t rows, std::size_t inner, std::size_t cols) {
  return Gemm{rows, inner, cols, inner, 1, cols, 1, cols};
}

void int_gemm(const Gemm& g, const std::int32_t* a, const std::int32_t* b, std::int64_t* out, MatmulAudit& audit) {
  ++audit.integer_matmuls;
  for (std::size_t r = 0; r < g.rows; ++r) {
    for (std::size_t c = 0; c < g.cols; ++c) {
      std::int64_t acc = 0;
      for (std::size_t k = 0; k < g.inner; ++k) {
        std::int64_t prod = 0;
        if (__builtin_mul_overflow(static_cast<std::int64_t>(a[r * g.a_r + k * g.a_k]),
                                   static_cast<std::int64_t>(b[k * g.b_k + c * g.b_c]), &prod) ||
            __builtin_add_overflow(acc, prod, &acc)) {
          throw NumericalError("integer accumulator overflow");
        }
      }
      out[r * g.ldo + c] = acc;
    }
  }
}

void float_gemm(const Gemm& g, const double* a, const double* b, double* out, MatmulAudit& audit) {
  ++audit.float_matmuls;
  if (audit.integer_only) ++audit.float_in_accumulator_assertions;
  for (std::size_t r = 0; r < g.rows; ++r) {
    for (std::size_t c = 0; c < g.cols; ++c) {
      double acc = 0.0;
      for (std::size_t k = 0; k < g.inner; ++k) acc += a[r * g.a_r + k * g.a_k] * b[k * g.b_k + c * g.b_c];
      out[r * g.ldo + c] = acc;
    }
  }
}

std::vector<double> dequantized(const Operand& op) {
  std::vector<double> v(op.codes.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = op.codes[i] * op.scale;
  return v;
}

std::vector<float> to_float(const Operand& op) {
  std::vector<float> v(op.codes.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(op.codes[i] * op.scale);
  return v;
}

class QuantBlock {
 public:
  QuantBlock(const BlockSpec& spec, const BlockWeights& w, const QuantPipelineSpec& pipe,
             const CalibrationResult& calib)
      : spec_(spec), w_(w), pipe_(pipe), calib_(calib) {
    spec.validate();
    pipe.validate();
    if (calib.block.embed_dim != spec.embed_dim || calib.block.heads != spec.heads ||
        calib.block.seq_len != spec.seq_len || calib.block.mlp_ratio != spec.mlp_ratio) {
      throw DataError("calibration was produced for a different block shape");
    }
    for (const auto& s : quant_sites()) check_site(s);
    audit_.integer_only = pipe.mode == PipelineMode::integer_path;
  }

  QuantForwardResult run(const Tensor& x) {
    const std::size_t n = spec_.seq_len, d = spec_.embed_dim, h = spec_.heads, dh = spec_.head_dim();
    const std::size_t hid = spec_.hidden_dim();
    if (x.shape() != Shape{n, d}) {
      throw ShapeError("block input must be " + shape_to_string({n, d}) + ", got " + shape_to_string(x.shape()));
    }
    out_ = TensorBundle{};
    preact_ = TensorBundle{};

    const std::vector<float> xq = ln_input(site::ln1_input, x);
    const auto h1 = layer_norm(xq, n, d, w_.ln1_gamma.data(), w_.ln1_beta.data(), spec_.ln_eps);
    const Operand h1q = activation(site::ln1_output, Tensor({n, d}, h1));
    const Operand wqkv = weight(site::qkv_weights, w_.qkv_weight);
    const auto qkv = linear(site::qkv_output, h1q, wqkv, w_.qkv_bias, n, d, 3 * d);

    std::vector<float> q(n * d), k(n * d), v(n * d);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < d; ++c) {
        q[r * d + c] = qkv[r * 3 * d + c];
        k[r * d + c] = qkv[r * 3 * d + d + c];
        v[r * d + c] = qkv[r * 3 * d + 2 * d + c];
      }
    }
    const Operand qq = activation(site::query, Tensor({n, d}, q));
    const Operand kq = activation(site::key, Tensor({n, d}, k));
    const Operand vq = activation(site::value, Tensor({n, d}, v));

    // Logits: per head, q_h (n, dh) x k_h^T (dh, n).
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<float> logits(h * n * n);
    for (std::size_t head = 0; head < h; ++head) {
      const Gemm g{n, dh, n, d, 1, 1, d, n};
      std::vector<float> part(n * n);
      product(g, qq, kq, head * dh, head * dh, part, {}, inv_sqrt);
      std::copy(part.begin(), part.end(), logits.begin() + static_cast<std::ptrdiff_t>(head * n * n));
    }
    keep_preact(site::attention_logits, {h, n, n}, logits);

    const Operand probs = softmax(logits);

    // Context: per head, probs_h (n, n) x v_h (n, dh).
    std::vector<float> ctx(n * d);
    for (std::size_t head = 0; head < h; ++head) {
      const Gemm g{n, n, dh, n, 1, d, 1, dh};
      std::vector<float> part(n * dh);
      product(g, probs, vq, head * n * n, head * dh, part, {}, 1.0);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < dh; ++c) ctx[i * d + head * dh + c] = part[i * dh + c];
      }
    }
    keep_preact(site::attn_context, {n, d}, ctx);

    const Operand ctxq = activation(site::attn_context, Tensor({n, d}, ctx));
    const Operand wproj = weight(site::proj_weights, w_.proj_weight);
    const auto proj = linear(site::proj_output, ctxq, wproj, w_.proj_bias, n, d, d);

    std::vector<float> x2(n * d);
    // Residual adds stay in high precision; only the LN operand is quantized.
    for (std::size_t i = 0; i < x2.size(); ++i) x2[i] = x[i] + proj[i];
    const std::vector<float> x2q = ln_input(site::ln2_input, Tensor({n, d}, x2));
    const auto h2 = layer_norm(x2q, n, d, w_.ln2_gamma.data(), w_.ln2_beta.data(), spec_.ln_eps);
    const Operand h2q = activation(site::ln2_output, Tensor({n, d}, h2));
    const Operand wfc1 = weight(site::fc1_weights, w_.fc1_weight);
    auto f1 = linear(site::fc1_output, h2q, wfc1, w_.fc1_bias, n, d, hid);
    for (auto& val : f1) val = gelu(val);
    const Operand gq = activation(site::post_gelu, Tensor({n, hid}, f1));
    const Operand wfc2 = weight(site::fc2_weights, w_.fc2_weight);
    const auto f2 = linear(site::fc2_output, gq, wfc2, w_.fc2_bias, n, hid, d);

    std::vector<float> y(n * d);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = x2[i] + f2[i];

    QuantForwardResult r;
    r.output = Tensor({n, d}, std::move(y));
    r.sites = std::move(out_);
    r.preactivations = std::move(preact_);
    r.audit = audit_;
    return r;
  }

 private:
  void check_site(const std::string& s) const {
    const SiteSpec& ss = pipe_.at(s);
    if (!calib_.has_site(s)) throw DataError("calibration has no parameters for site '" + s + "'");
    auto mismatch = [&](const char* what) {
      throw DataError("calibration for site '" + s + "' does not match the pipeline: " + what);
    };
    if (is_weight_site(s) || ss.scheme == Scheme::uniform) {
      if (ss.scheme != Scheme::uniform) mismatch("scheme");
      if (calib_.uniform(s).bits != ss.bits) mismatch("bit width");
    } else if (ss.scheme == Scheme::v2sf) {
      const V2sfParams& p = calib_.v2sf(s);
      if (p.bits != ss.bits || p.kind != ss.v2sf_kind || p.shift != ss.v2sf_shift) mismatch("V-2SF parameters");
    } else {
      const O2sfParams& p = calib_.o2sf(s);
      if (p.bits != ss.bits) mismatch("bit width");
      if (p.outlier_mask.size() != spec_.embed_dim) mismatch("channel count");
    }
  }

  void keep(const std::string& s, Shape shape, std::vector<float> v) {
    out_.insert(bundle_name(s), Tensor(std::move(shape), std::move(v)));
  }

  void keep_preact(const std::string& s, Shape shape, std::vector<float> v) {
    preact_.insert(bundle_name(s), Tensor(std::move(shape), std::move(v)));
  }

  // LayerNorm inputs: O-2SF codes, then high-precision LN on their values.
  std::vector<float> ln_input(const std::string& s, const Tensor& t) {
    const O2sfParams& p = calib_.o2sf(s);
    const Tensor deq = o2sf_dequantize(o2sf_quantize(t, t.rank() - 1, p));
    keep(s, t.shape(), deq.values());
    return deq.values();
  }

  Operand activation(const std::string& s, const Tensor& t) {
    const SiteSpec& ss = pipe_.at(s);
    Operand op;
    if (ss.scheme == Scheme::v2sf) {
      const V2sfParams& p = calib_.v2sf(s);
      op.codes = v2sf_aligned_codes(t, p);
      op.scale = p.small_scale;
    } else {
      const QuantParams& p = calib_.uniform(s);
      op.codes = quantize(t, p).codes;
      op.scale = p.scale;
    }
    keep(s, t.shape(), to_float(op));
    return op;
  }

  Operand weight(const std::string& s, const Tensor& t) {
    const QuantParams& p = calib_.uniform(s);
    Operand op{quantize(t, p).codes, p.scale};
    keep(s, t.shape(), to_float(op));
    return op;
  }

  // out = (a x b) * a.scale * b.scale [+ bias] then * post; the bias is
  // quantized onto the accumulator grid so both modes add the same value.
  void product(const Gemm& g, const Operand& a, const Operand& b, std::size_t a_off, std::size_t b_off,
               std::vector<float>& out, std::span<const float> bias, double post) {
    const double unit = a.scale * b.scale;
    std::vector<std::int64_t> bias_codes;
    for (float bv : bias) {
      const double c = std::round(static_cast<double>(bv) / unit);
      if (!(std::fabs(c) < 0x1.0p62)) throw NumericalError("bias does not fit the accumulator");
      bias_codes.push_back(static_cast<std::int64_t>(c));
    }
    const std::size_t count = g.rows * g.cols;
    if (pipe_.mode == PipelineMode::integer_path) {
      std::vector<std::int64_t> acc(count);
      int_gemm(g, a.codes.data() + a_off, b.codes.data() + b_off, acc.data(), audit_);
      for (std::size_t r = 0; r < g.rows; ++r) {
        for (std::size_t c = 0; c < g.cols; ++c) {
          std::int64_t v = acc[r * g.ldo + c];
          if (!bias_codes.empty() && __builtin_add_overflow(v, bias_codes[c], &v)) {
            throw NumericalError("integer accumulator overflow");
          }
          out[r * g.ldo + c] = static_cast<float>(static_cast<double>(v) * unit * post);
        }
      }
    } else {
      const auto av = dequantized(a);
      const auto bv = dequantized(b);
      std::vector<double> acc(count);
      float_gemm(g, av.data() + a_off, bv.data() + b_off, acc.data(), audit_);
      for (std::size_t r = 0; r < g.rows; ++r) {
        for (std::size_t c = 0; c < g.cols; ++c) {
          double v = acc[r * g.ldo + c];
          if (!bias_codes.empty()) v += static_cast<double>(bias_codes[c]) * unit;
          out[r * g.ldo + c] = static_cast<float>(v * post);
        }
      }
    }
  }

  std::vector<float> linear(const std::string& out_site, const Operand& a, const Operand& w, const Tensor& bias,
                            std::size_t rows, std::size_t inner, std::size_t cols) {
    std::vector<float> out(rows * cols);
    product(dense(rows, inner, cols), a, w, 0, 0, out, bias.data(), 1.0);
    keep_preact(out_site, {rows, cols}, out);
    return out;
  }

  Operand softmax(const std::vector<float>& logits) {
    const std::size_t n = spec_.seq_len, h = spec_.heads;
    const Operand lq = activation(site::attention_logits, Tensor({h, n, n}, logits));
    std::vector<float> probs(logits.size());
    if (pipe_.mode == PipelineMode::integer_path && !pipe_.float_softmax) {
      for (std::size_t r = 0; r < h * n; ++r) {
        const auto row = int_softmax_row(std::span(lq.codes).subspan(r * n, n), lq.scale, pipe_.softmax);
        // Probability codes re-enter the V-2SF encoder at their exact value.
        for (std::size_t j = 0; j < n; ++j) {
          probs[r * n + j] = static_cast<float>(row.codes[j] * row.output_scale);
        }
      }
    } else {
      probs = to_float(lq);
      softmax_rows_inplace(probs, n);
    }
    return activation(site::post_softmax, Tensor({h, n, n}, probs));
  }

  const BlockSpec& spec_;
  const BlockWeights& w_;
  const QuantPipelineSpec& pipe_;
  const CalibrationResult& calib_;
  MatmulAudit audit_;
  TensorBundle out_;
  TensorBundle preact_;
};

// Accumulates signal and noise energy for one site across samples.
struct EnergyAccumulator {
  double signal = 0.0;
  double noise = 0.0;
  std::size_t count = 0;

  void add(std::span<const float> ref, std::span<const float> test) {
    if (ref.size() != test.size()) throw ShapeError("site sizes differ between FP and quantized runs");
    for (std::size_t i = 0; i < ref.size(); ++i) {
      const double r = ref[i];
      const double e = r - static_cast<double>(test[i]);
      signal += r * r;
      noise += e * e;
    }
    count += ref.size();
  }

  double mse() const { return count ? noise / static_cast<double>(count) : 0.0; }
  double sqnr() const {
    if (noise == 0.0) return std::numeric_limits<double>::infinity();
    if (signal == 0.0) throw NumericalError("SQNR undefined for a zero-energy reference");
    return 10.0 * std::log10(signal / noise);
  }
};

const std::vector<std::string>& matmul_outputs() {
  static const std::vector<std::string> v = {site::qkv_output,  site::attention_logits, site::attn_context,
                                             site::proj_output, site::fc1_output,       site::fc2_output};
  return v;
}

void merge_audit(MatmulAudit& into, const MatmulAudit& a) {
  into.integer_only = a.integer_only;
  into.integer_matmuls += a.integer_matmuls;
  into.float_matmuls += a.float_matmuls;
  into.float_in_accumulator_assertions += a.float_in_accumulator_assertions;
}

std::string number(double v) {
  char buf[64];
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

nlohmann::json json_number(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? "inf" : "-inf";
}

}  // namespace

QuantForwardResult quant_forward(const BlockSpec& spec, const BlockWeights& w, const QuantPipelineSpec& pipeline,
                                 const CalibrationResult& calib, const Tensor& x) {
  QuantBlock block(spec, w, pipeline, calib);
  return block.run(x);
}

EvalReport evaluate_pipeline(const BlockSpec& spec, const BlockWeights& w, const QuantPipelineSpec& pipeline,
                             const CalibrationResult& calib, const Tensor& batch) {
  if (batch.rank() != 3) throw ShapeError("evaluation batch must have shape (S, n, d)");
  QuantBlock block(spec, w, pipeline, calib);
  EvalReport rep;
  rep.mode = pipeline.mode;
  rep.samples = batch.shape()[0];
  std::map<std::string, EnergyAccumulator> acc;
  EnergyAccumulator out_acc;
  double max_abs = 0.0;

  // Weight sites do not depend on the sample; compare them once.
  TensorBundle weights;
  add_weights_to_bundle(w, weights);
  for (std::size_t i = 0; i < rep.samples; ++i) {
    const Tensor x = sample_slice(batch, i);
    TensorBundle fp_sites;
    const Tensor fp = fp_forward(spec, w, x, &fp_sites);
    const QuantForwardResult q = block.run(x);
    merge_audit(rep.audit, q.audit);
    for (const auto& s : quant_sites()) {
      if (is_weight_site(s) && i > 0) continue;
      const Tensor* ref = fp_sites.find(bundle_name(s));
      const Tensor& reference = ref ? *ref : [&]() -> const Tensor& {
        if (s == site::qkv_weights) return w.qkv_weight;
        if (s == site::proj_weights) return w.proj_weight;
        if (s == site::fc1_weights) return w.fc1_weight;
        return w.fc2_weight;
      }();
      acc[s].add(reference.data(), q.sites.at(bundle_name(s)).data());
    }
    out_acc.add(fp.data(), q.output.data());
    for (std::size_t k = 0; k < fp.size(); ++k) {
      max_abs = std::max(max_abs, std::fabs(static_cast<double>(fp[k]) - q.output[k]));
    }
  }
  for (const auto& s : quant_sites()) {
    const auto& a = acc.at(s);
    const SiteSpec& ss = pipeline.at(s);
    rep.sites.push_back(SiteError{s, ss.scheme, ss.bits, a.mse(), a.sqnr(), a.count});
  }
  rep.output_mse = out_acc.mse();
  rep.output_sqnr_db = out_acc.sqnr();
  rep.output_max_abs_error = max_abs;
  IntSoftmaxConfig tol_cfg = pipeline.softmax;
  rep.softmax_tolerance = int_exp_tolerance(-10.0, 100000, tol_cfg);
  return rep;
}

CrossModeReport cross_mode_check(const BlockSpec& spec, const BlockWeights& w, const QuantPipelineSpec& pipeline,
                                 const CalibrationResult& calib, const Tensor& batch) {
  if (batch.rank() != 3) throw ShapeError("batch must have shape (S, n, d)");
  QuantPipelineSpec fq = pipeline, ip = pipeline;
  fq.mode = PipelineMode::fake_quant;
  ip.mode = PipelineMode::integer_path;
  fq.float_softmax = ip.float_softmax = true;
  QuantBlock a(spec, w, fq, calib), b(spec, w, ip, calib);
  CrossModeReport rep;
  for (std::size_t i = 0; i < batch.shape()[0]; ++i) {
    const Tensor x = sample_slice(batch, i);
    const auto ra = a.run(x);
    const auto rb = b.run(x);
    for (const auto& s : matmul_outputs()) {
      const auto va = ra.preactivations.at(bundle_name(s)).data();
      const auto vb = rb.preactivations.at(bundle_name(s)).data();
      for (std::size_t k = 0; k < va.size(); ++k) {
        ++rep.compared;
        if (va[k] != vb[k]) ++rep.mismatched;
        rep.max_abs_difference = std::max(rep.max_abs_difference, std::fabs(static_cast<double>(va[k]) - vb[k]));
      }
    }
  }
  return rep;
}

nlohmann::json eval_report_to_json(const EvalReport& r) {
  nlohmann::json sites = nlohmann::json::array();
  for (const auto& s : r.sites) {
    sites.push_back({{"site", s.site},
                     {"scheme", to_string(s.scheme)},
                     {"bits", s.bits},
                     {"mse", json_number(s.mse)},
                     {"sqnr_db", json_number(s.sqnr_db)},
                     {"elements", s.count}});
  }
  return {{"mode", to_string(r.mode)},
          {"samples", r.samples},
          {"sites", sites},
          {"output", {{"mse", json_number(r.output_mse)},
                      {"max_abs_error", json_number(r.output_max_abs_error)},
                      {"sqnr_db", json_number(r.output_sqnr_db)}}},
          {"matmuls", {{"integer", r.audit.integer_matmuls},
                       {"float", r.audit.float_matmuls},
                       {"float_in_accumulator_assertions", r.audit.float_in_accumulator_assertions}}},
          {"int_softmax", {{"grid_points", r.softmax_tolerance.points},
                           {"grid_lo", -10.0},
                           {"max_relative_error", r.softmax_tolerance.max_relative_error},
                           {"worst_input", r.softmax_tolerance.worst_input},
                           {"target", 0.02}}}};
}

std::string eval_report_table(const EvalReport& r) {
  std::ostringstream os;
  char line[160];
  os << "mode " << to_string(r.mode) << ", " << r.samples << " samples\n";
  std::snprintf(line, sizeof line, "%-18s %-8s %4s %14s %10s\n", "site", "scheme", "bits", "mse", "sqnr_db");
  os << line;
  for (const auto& s : r.sites) {
    std::snprintf(line, sizeof line, "%-18s %-8s %4d %14s %10s\n", s.site.c_str(), to_string(s.scheme), s.bits,
                  number(s.mse).c_str(), number(s.sqnr_db).c_str());
    os << line;
  }
  os << "output: mse " << number(r.output_mse) << ", max |err| " << number(r.output_max_abs_error) << ", sqnr "
     << number(r.output_sqnr_db) << " dB\n";
  os << "matmuls: " << r.audit.integer_matmuls << " integer, " << r.audit.float_matmuls << " float, "
     << r.audit.float_in_accumulator_assertions << " float-in-accumulator assertions\n";
  os << "int softmax: max relative exp error " << number(r.softmax_tolerance.max_relative_error) << " over "
     << r.softmax_tolerance.points << " points in [-10, 0]\n";
  return os.str();
}

}  // namespace tsq
