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

#include "tsq/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tsq/errors.hpp"
#include "tsq/parallel.hpp"

namespace tsq {

const char* to_string(MetricKind m) { return m == MetricKind::plain_mse ? "plain_mse" : "grad_weighted"; }

const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::uniform:
      return "uniform";
    case Scheme::v2sf:
      return "v2sf";
    case Scheme::o2sf:
      return "o2sf";
  }
  return "?";
}

MetricKind metric_from_string(const std::string& s) {
  if (s == "plain_mse") return MetricKind::plain_mse;
  if (s == "grad_weighted") return MetricKind::grad_weighted;
  throw ValidationError("unknown metric '" + s + "'");
}

Scheme scheme_from_string(const std::string& s) {
  if (s == "uniform") return Scheme::uniform;
  if (s == "v2sf") return Scheme::v2sf;
  if (s == "o2sf") return Scheme::o2sf;
  throw ValidationError("unknown scheme '" + s + "'");
}

void SearchConfig::validate() const {
  if (rounds < 1) throw ValidationError("rounds must be >= 1");
  if (candidates < 2) throw ValidationError("candidate count N must be >= 2");
  if (max_shift < 0) throw ValidationError("shift bound N' must be >= 0");
  if (!(space_factor > 0.0)) throw ValidationError("space factor must be > 0");
  QuantParams{1.0f, 0, weight_bits}.validate();
  QuantParams{1.0f, 0, activation_bits}.validate();
}

std::vector<float> candidate_grid(float max_val, int bits, int n, double space_factor) {
  if (!(max_val >= 0.0f) || !std::isfinite(max_val)) throw ValidationError("grid max must be finite and >= 0");
  if (n < 1) throw ValidationError("grid size must be >= 1");
  if (max_val == 0.0f) return {1.0f};
  const double upper = space_factor * static_cast<double>(max_val) / std::ldexp(1.0, bits - 1);
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 1; i <= n; ++i) {
    const float c = static_cast<float>(static_cast<double>(i) / n * upper);
    if (c > 0.0f) out.push_back(c);
  }
  if (out.empty()) throw NumericalError("candidate grid underflows to zero");
  return out;
}

double hessian_metric(const MetricInput& in, MetricKind kind) {
  if (in.fp_output.shape() != in.quant_output.shape()) {
    throw ShapeError("metric: output shapes differ " + shape_to_string(in.fp_output.shape()) + " vs " +
                     shape_to_string(in.quant_output.shape()));
  }
  auto fp = in.fp_output.data();
  auto q = in.quant_output.data();
  double acc = 0.0;
  if (kind == MetricKind::plain_mse) {
    for (std::size_t i = 0; i < fp.size(); ++i) {
      const double d = static_cast<double>(fp[i]) - static_cast<double>(q[i]);
      acc += d * d;
    }
    return acc;
  }
  if (!in.grad) throw DataError("grad_weighted metric requires a gradient tensor");
  if (in.grad->shape() != in.fp_output.shape()) throw ShapeError("metric: gradient shape differs from output");
  auto g = in.grad->data();
  for (std::size_t i = 0; i < fp.size(); ++i) {
    const double d = static_cast<double>(fp[i]) - static_cast<double>(q[i]);
    const double w = static_cast<double>(g[i]) * static_cast<double>(g[i]);
    acc += w * d * d;
  }
  return acc;
}

bool gradient_is_degenerate(const Tensor& grad) {
  return std::all_of(grad.data().begin(), grad.data().end(), [](float v) { return v == 0.0f; });
}

Tensor apply_activation_params(const Tensor& t, const ActivationParams& p, std::size_t channel_axis) {
  return std::visit(
      [&](const auto& params) -> Tensor {
        using P = std::decay_t<decltype(params)>;
        if constexpr (std::is_same_v<P, QuantParams>) {
          return fake_quantize(t, params);
        } else if constexpr (std::is_same_v<P, V2sfParams>) {
          return v2sf_fake_quantize(t, params);
        } else {
          return o2sf_fake_quantize(t, channel_axis, params);
        }
      },
      p);
}

namespace {

struct Candidate {
  float primary = 0.0f;
  float secondary = 0.0f;
};

struct SweepWinner {
  std::size_t index = 0;
  double metric = 0.0;
};

// Evaluates every candidate (in parallel) and returns the argmin with ties
// resolved toward the smaller (primary, secondary) scale pair, so the answer
// is independent of evaluation order and thread count.
template <typename Eval>
SweepWinner sweep(const std::vector<Candidate>& cands, unsigned threads, Eval&& eval) {
  std::vector<double> metrics(cands.size());
  parallel_for(cands.size(), threads, [&](std::size_t i) { metrics[i] = eval(cands[i]); });
  std::optional<SweepWinner> best;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    const double m = metrics[i];
    if (!std::isfinite(m)) continue;
    if (!best || m < best->metric) {
      best = SweepWinner{i, m};
      continue;
    }
    if (m == best->metric) {
      const auto& a = cands[i];
      const auto& b = cands[best->index];
      if (a.primary < b.primary || (a.primary == b.primary && a.secondary < b.secondary)) best = SweepWinner{i, m};
    }
  }
  if (!best) throw NumericalError("every candidate produced a non-finite metric");
  return *best;
}

std::vector<Candidate> as_candidates(const std::vector<float>& grid) {
  std::vector<Candidate> out;
  out.reserve(grid.size());
  for (float g : grid) out.push_back({g, 0.0f});
  return out;
}

float class_abs_max(const Tensor& t, std::size_t axis, const std::vector<std::size_t>& channels) {
  const SliceStats s = elementwise_stats(t, axis);
  float m = 0.0f;
  for (auto c : channels) m = std::max(m, s.abs_max[c]);
  return m;
}

}  // namespace

float v2sf_grid_max(const Tensor& t, const V2sfParams& p) {
  const SliceStats st = elementwise_stats(t);
  float m = std::max(st.max[0], 0.0f);
  if (p.kind == V2sfKind::gelu && st.min[0] < 0.0f) {
    // Negatives only reach -(2^(b-2) - 1) * s_s; scale their extent up to the
    // full extended range so the grid can cover them.
    const V2sfLayout l = v2sf_layout(p);
    const double reach = -static_cast<double>(st.min[0]) * static_cast<double>(l.full_code_max + 1) /
                         static_cast<double>(-l.full_code_min);
    m = std::max(m, static_cast<float>(reach));
  }
  return m;
}

LayerCalibration search_layer(const LayerSearchInput& in, const SearchConfig& cfg) {
  cfg.validate();
  if (!in.activations) throw DataError("layer " + in.name + ": no activations supplied");
  if (!in.evaluate) throw DataError("layer " + in.name + ": no evaluator supplied");
  const Tensor& acts = *in.activations;
  const unsigned threads = resolve_thread_count(cfg.threads);

  LayerCalibration result;
  result.layer = in.name;
  result.scheme = in.scheme.scheme;
  result.channel_axis = in.scheme.channel_axis;
  const int wb = in.weight_bits.value_or(cfg.weight_bits);
  QuantParams{1.0f, 0, wb}.validate();

  MetricKind metric = cfg.metric;
  if (metric == MetricKind::grad_weighted) {
    if (!in.grad) throw DataError("layer " + in.name + ": grad_weighted metric needs a gradient");
    if (gradient_is_degenerate(*in.grad)) {
      result.warnings.push_back("gradient is identically zero; falling back to plain_mse");
      metric = MetricKind::plain_mse;
    }
  }

  const Tensor fp_out = in.evaluate(in.weights, acts);
  auto score = [&](const Tensor* w, const Tensor& a) {
    const Tensor q = in.evaluate(w, a);
    return hessian_metric(MetricInput{fp_out, q, in.grad}, metric);
  };

  // Weight grid and state.
  std::vector<float> weight_grid;
  std::optional<Tensor> qweights;
  float weight_scale = 0.0f;
  if (in.weights) {
    weight_grid = candidate_grid(abs_max(in.weights->data()), wb, cfg.candidates, cfg.space_factor);
    weight_scale = weight_grid.back();
    qweights = fake_quantize(*in.weights, QuantParams{weight_scale, 0, wb});
  }

  // Activation grids and state.
  const int ab = cfg.activation_bits;
  const auto& sch = in.scheme;
  std::vector<float> act_grid, outlier_grid, normal_grid;
  float act_scale = 0.0f, outlier_scale = 0.0f, normal_scale = 0.0f;
  std::vector<std::uint8_t> mask;
  std::optional<O2sfParams> final_o2sf;

  auto make_v2sf = [&](float s) { return V2sfParams{sch.v2sf_kind, ab, sch.v2sf_shift, s}; };
  auto quantize_acts = [&](float s) -> Tensor {
    if (sch.scheme == Scheme::uniform) return fake_quantize(acts, QuantParams{s, 0, ab});
    return v2sf_fake_quantize(acts, make_v2sf(s));
  };

  if (sch.scheme == Scheme::uniform) {
    act_grid = candidate_grid(abs_max(acts.data()), ab, cfg.candidates, cfg.space_factor);
    act_scale = act_grid.back();
  } else if (sch.scheme == Scheme::v2sf) {
    // The fine scale quantizes at the extended width (b - 1) + m magnitude bits.
    act_grid = candidate_grid(v2sf_grid_max(acts, make_v2sf(1.0f)), ab + sch.v2sf_shift, cfg.candidates,
                              cfg.space_factor);
    act_scale = act_grid.back();
  } else {
    const ChannelPartition part = detect_outlier_channels(elementwise_stats(acts, sch.channel_axis).abs_max);
    if (part.degenerate) result.warnings.push_back("all channels share one abs-max; outlier class forced");
    mask = part.mask();
    outlier_grid = candidate_grid(class_abs_max(acts, sch.channel_axis, part.outlier_indices), ab, cfg.candidates,
                                  cfg.space_factor);
    normal_grid = candidate_grid(class_abs_max(acts, sch.channel_axis, part.normal_indices), ab, cfg.candidates,
                                 cfg.space_factor);
    outlier_scale = outlier_grid.back();
    normal_scale = normal_grid.back();
  }

  auto current_acts = [&]() -> Tensor {
    if (sch.scheme == Scheme::o2sf) {
      return dual_scale_fake_quantize(acts, sch.channel_axis, mask, outlier_scale, normal_scale, ab);
    }
    return quantize_acts(act_scale);
  };

  Tensor qacts = current_acts();
  double best_metric = score(qweights ? &*qweights : nullptr, qacts);

  for (int round = 0; round < cfg.rounds; ++round) {
    const bool final_round = round + 1 == cfg.rounds;

    if (in.weights) {
      const auto win = sweep(as_candidates(weight_grid), threads, [&](const Candidate& c) {
        const Tensor w = fake_quantize(*in.weights, QuantParams{c.primary, 0, wb});
        return score(&w, qacts);
      });
      weight_scale = weight_grid[win.index];
      qweights = fake_quantize(*in.weights, QuantParams{weight_scale, 0, wb});
      best_metric = win.metric;
    }
    const Tensor* wptr = qweights ? &*qweights : nullptr;

    if (sch.scheme != Scheme::o2sf) {
      const auto win = sweep(as_candidates(act_grid), threads,
                             [&](const Candidate& c) { return score(wptr, quantize_acts(c.primary)); });
      act_scale = act_grid[win.index];
      best_metric = win.metric;
    } else if (!final_round) {
      auto win = sweep(as_candidates(outlier_grid), threads, [&](const Candidate& c) {
        return score(wptr, dual_scale_fake_quantize(acts, sch.channel_axis, mask, c.primary, normal_scale, ab));
      });
      outlier_scale = outlier_grid[win.index];
      win = sweep(as_candidates(normal_grid), threads, [&](const Candidate& c) {
        return score(wptr, dual_scale_fake_quantize(acts, sch.channel_axis, mask, outlier_scale, c.primary, ab));
      });
      normal_scale = normal_grid[win.index];
      best_metric = win.metric;
    } else {
      // Shift-aligned last iteration: s_n is restricted to s_o >> k.
      std::vector<Candidate> pairs;
      std::vector<int> shifts;
      for (float so : outlier_grid) {
        const auto cands = eq4_candidates(so, cfg.max_shift);
        for (std::size_t k = 0; k < cands.size(); ++k) {
          pairs.push_back({so, cands[k]});
          shifts.push_back(static_cast<int>(k));
        }
      }
      const auto win = sweep(pairs, threads, [&](const Candidate& c) {
        return score(wptr, dual_scale_fake_quantize(acts, sch.channel_axis, mask, c.primary, c.secondary, ab));
      });
      outlier_scale = pairs[win.index].primary;
      normal_scale = pairs[win.index].secondary;
      final_o2sf = O2sfParams::from_shift(mask, outlier_scale, shifts[win.index], ab);
      best_metric = win.metric;
    }
    qacts = current_acts();
    result.round_metrics.push_back(best_metric);
  }

  if (qweights) result.weight = QuantParams{weight_scale, 0, wb};
  switch (sch.scheme) {
    case Scheme::uniform:
      result.activation = QuantParams{act_scale, 0, ab};
      break;
    case Scheme::v2sf:
      result.activation = make_v2sf(act_scale);
      break;
    case Scheme::o2sf:
      result.activation = *final_o2sf;
      break;
  }
  result.metric = best_metric;
  return result;
}

namespace {

LayerEvaluator identity_evaluator() {
  return [](const Tensor*, const Tensor& a) { return a; };
}

SearchConfig single_pass(const SearchConfig& cfg, int bits) {
  SearchConfig c = cfg;
  c.rounds = 1;
  c.metric = MetricKind::plain_mse;
  c.activation_bits = bits;
  return c;
}

}  // namespace

QuantParams best_uniform_params(const Tensor& t, int bits, const SearchConfig& cfg) {
  LayerSearchInput in{"tensor", identity_evaluator(), nullptr, &t, nullptr, {Scheme::uniform}, std::nullopt};
  return std::get<QuantParams>(search_layer(in, single_pass(cfg, bits)).activation);
}

V2sfParams best_v2sf_params(const Tensor& t, V2sfKind kind, int bits, int shift, const SearchConfig& cfg) {
  LayerSearchInput in{"tensor", identity_evaluator(), nullptr, &t, nullptr, {Scheme::v2sf, kind, shift, 0}, std::nullopt};
  return std::get<V2sfParams>(search_layer(in, single_pass(cfg, bits)).activation);
}

}  // namespace tsq
