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

#include "commands.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "tsq/bundle_io.hpp"
#include "tsq/calib_result.hpp"
#include "tsq/calibrate.hpp"
#include "tsq/compare.hpp"
#include "tsq/errors.hpp"
#include "tsq/npy.hpp"
#include "tsq/v2sf.hpp"

namespace tsq::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Raw flag values; an option only overrides the config when it was given.
struct Flags {
  bool synthetic = false;
  std::string bundle, config, out, calib, metric, mode;
  std::uint64_t seed = 0;
  int bits = 8, weight_bits = 8, act_bits = 8, rounds = 3, candidates = 100, threads = 0;
  std::size_t samples = 32;
};

// Thrown for invalid combinations of otherwise well-formed flags.
struct UsageError : Error {
  using Error::Error;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
}

json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file " + path.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw FormatError("config file " + path.string() + ": " + e.what());
  }
}

RunConfig build_config(const CLI::App& sub, const Flags& f) {
  const std::string command = sub.get_name();
  auto given = [&](const char* name) {
    const CLI::Option* o = sub.get_option_no_throw(name);
    return o && o->count() > 0;
  };
  RunConfig c;
  c.command = command;
  c.synthetic = f.synthetic;
  if (!f.bundle.empty()) c.bundle = f.bundle;
  if (!f.calib.empty()) c.calibration = f.calib;
  c.out = f.out;
  if (command == "eval") c.samples = 8;

  json file = json::object();
  if (!f.config.empty()) file = read_json(f.config);
  if (file.contains("block")) c.block = block_spec_from_json(file.at("block"), c.block);
  if (file.contains("search")) c.search = search_config_from_json(file.at("search"), c.search);
  c.seed = file.value("seed", c.search.seed);
  c.samples = file.value("samples", c.samples);

  if (given("--seed")) c.seed = f.seed;
  c.search.seed = c.seed;
  if (given("--samples")) c.samples = f.samples;
  if (given("--bits")) c.search.weight_bits = c.search.activation_bits = f.bits;
  if (given("--weight-bits")) c.search.weight_bits = f.weight_bits;
  if (given("--act-bits")) c.search.activation_bits = f.act_bits;
  if (given("--rounds")) c.search.rounds = f.rounds;
  if (given("--candidates")) c.search.candidates = f.candidates;
  if (given("--metric")) c.search.metric = metric_from_string(f.metric);
  c.search.threads = f.threads;

  c.pipeline = QuantPipelineSpec::make_default(c.search.weight_bits, c.search.activation_bits);
  if (file.contains("pipeline")) c.pipeline = pipeline_spec_from_json(file.at("pipeline"), c.pipeline);
  if (given("--mode")) c.pipeline.mode = pipeline_mode_from_string(f.mode);

  if (c.samples == 0) throw ValidationError("sample count must be >= 1");
  c.block.validate();
  c.search.validate();
  c.pipeline.validate();
  return c;
}

void require_one_input(const RunConfig& c) {
  if (c.synthetic == c.bundle.has_value()) throw UsageError("pass exactly one of --synthetic or --bundle");
}

void write_config_echo(const RunConfig& c) {
  fs::create_directories(c.out);
  write_text(c.out / "config.json", run_config_to_json(c).dump(2) + "\n");
}

int cmd_calibrate(const RunConfig& c, std::ostream& out, std::ostream& err) {
  require_one_input(c);
  TensorBundle bundle;
  if (c.synthetic) {
    bundle = synthetic_calibration_bundle(c.block, c.samples, c.seed, c.search.metric == MetricKind::grad_weighted);
  } else {
    bundle = load_bundle(*c.bundle);
  }
  err << "[tsq] calibrating " << calibration_layers().size() << " layers\n";
  const CalibrationResult r = calibrate_model(bundle, c.block, c.pipeline, c.search);
  write_config_echo(c);
  save_calibration(r, c.out / "calibration.json");
  for (const auto& l : r.layers) {
    out << l.layer << ": " << to_string(l.scheme) << " metric " << hex_float(l.metric) << "\n";
    for (const auto& w : l.warnings) err << "[tsq] warning: " << l.layer << ": " << w << "\n";
  }
  out << "wrote " << (c.out / "calibration.json").string() << "\n";
  return kOk;
}

int cmd_quantize(RunConfig c, std::ostream& out, std::ostream&) {
  require_one_input(c);
  const CalibrationResult calib = load_calibration(*c.calibration);
  const TensorBundle bundle =
      c.synthetic ? synthetic_calibration_bundle(calib.block, c.samples, c.seed, false) : load_bundle(*c.bundle);
  const QuantPipelineSpec pipe = pipeline_from_calibration(calib, c.pipeline.mode);
  c.pipeline = pipe;

  const fs::path packed = c.out / "packed";
  fs::create_directories(packed);
  TensorBundle dequantized;
  std::vector<std::string> sites;
  for (const auto& s : quant_sites()) {
    const std::string src = weight_tensor_name(s);
    const Tensor* t = bundle.find(src);
    if (!t) throw DataError("bundle is missing tensor " + src);
    const SiteSpec& ss = pipe.at(s);
    if (ss.scheme == Scheme::v2sf) {
      const V2sfEncoded e = v2sf_encode(*t, calib.v2sf(s));
      const fs::path file = packed / (bundle_name(s) + ".v2sf");
      save_v2sf(e, file);
      out << s << ": v2sf " << e.payload.size() << " payload bytes -> " << file.string() << "\n";
      dequantized.insert(bundle_name(s), v2sf_decode(e));
    } else if (ss.scheme == Scheme::o2sf) {
      dequantized.insert(bundle_name(s), o2sf_fake_quantize(*t, t->rank() - 1, calib.o2sf(s)));
      out << s << ": o2sf, " << calib.o2sf(s).outlier_count() << " outlier channels\n";
    } else {
      dequantized.insert(bundle_name(s), fake_quantize(*t, calib.uniform(s)));
      out << s << ": uniform " << calib.uniform(s).bits << "-bit\n";
    }
    sites.push_back(s);
  }
  BundleManifest m;
  m.model = "tsq-toy-block";
  m.sites = sites;
  m.sample_count = calib.samples;
  m.seed = c.seed;
  save_bundle(dequantized, c.out / "dequantized", m);
  write_config_echo(c);
  return kOk;
}

int cmd_eval(RunConfig c, std::ostream& out, std::ostream&) {
  if (c.synthetic && c.bundle) throw UsageError("pass at most one of --synthetic or --bundle");
  const CalibrationResult calib = load_calibration(*c.calibration);
  QuantPipelineSpec pipe = pipeline_from_calibration(calib, c.pipeline.mode);
  pipe.softmax = c.pipeline.softmax;
  c.pipeline = pipe;
  BlockWeights w;
  Tensor batch;
  if (c.bundle) {
    const TensorBundle b = load_bundle(*c.bundle);
    w = weights_from_bundle(b, calib.block);
    batch = b.at(bundle_name(site::ln1_input));
  } else {
    w = init_block_weights(calib.block);
    batch = synthetic_batch(calib.block, c.seed, c.samples);
  }
  const EvalReport rep = evaluate_pipeline(calib.block, w, pipe, calib, batch);
  out << eval_report_table(rep);
  if (!c.out.empty()) {
    write_config_echo(c);
    write_text(c.out / "eval_report.json", eval_report_to_json(rep).dump(2) + "\n");
    out << "wrote " << (c.out / "eval_report.json").string() << "\n";
  }
  return kOk;
}

int cmd_compare(const RunConfig& c, std::ostream& out, std::ostream&) {
  const BlockWeights w = init_block_weights(c.block);
  const CompareReport r =
      compare_schemes(c.block, w, synthetic_batch(c.block, c.seed, c.samples), c.search.activation_bits, c.search);
  write_config_echo(c);
  json sites = json::array();
  for (const auto& s : r.sites) {
    json schemes = json::array();
    for (std::size_t i = 0; i < s.schemes.size(); ++i) {
      const auto& sr = s.schemes[i];
      const std::string file = s.site + "_" + sr.scheme + ".csv";
      write_text(c.out / file, sr.histogram.to_csv());
      schemes.push_back({{"scheme", sr.scheme},
                         {"mse", sr.mse},
                         {"levels_used", sr.levels_used},
                         {"levels_available", sr.levels_available},
                         {"histogram", file},
                         {"lowest_mse", i == s.best}});
    }
    sites.push_back({{"site", s.site},
                     {"fp_min", s.fp_min},
                     {"fp_max", s.fp_max},
                     {"twin_region_r2_bins_used", s.twin_r2_bins_used},
                     {"twin_region_r2_bins_total", s.twin_r2_bins_total},
                     {"schemes", schemes}});
  }
  const json summary{{"bits", r.bits}, {"samples", r.samples}, {"sites", sites}};
  write_text(c.out / "summary.json", summary.dump(2) + "\n");
  const std::string table = compare_summary(r);
  write_text(c.out / "summary.txt", table);
  out << table;
  return kOk;
}

void add_search_flags(CLI::App* sub, Flags& f) {
  sub->add_option("--bits", f.bits, "Bit width of every weight and activation site");
  sub->add_option("--weight-bits", f.weight_bits, "Weight bit width");
  sub->add_option("--act-bits", f.act_bits, "Activation bit width");
  sub->add_option("--metric", f.metric, "plain_mse or grad_weighted");
  sub->add_option("--rounds", f.rounds, "Alternating search rounds");
  sub->add_option("--candidates", f.candidates, "Candidates per grid (N)");
}

void add_common_flags(CLI::App* sub, Flags& f) {
  sub->add_option("--seed", f.seed, "Seed for synthetic data");
  sub->add_option("--samples", f.samples, "Synthetic sample count");
  sub->add_option("--config", f.config, "JSON config file; flags override its values");
  sub->add_option("--threads", f.threads, "Worker threads (default: $TSQ_THREADS or all cores)");
}

}  // namespace

json run_config_to_json(const RunConfig& c) {
  json j{{"command", c.command},
         {"synthetic", c.synthetic},
         {"seed", c.seed},
         {"samples", c.samples},
         {"block", block_spec_to_json(c.block)},
         {"search", search_config_to_json(c.search)},
         {"pipeline", pipeline_spec_to_json(c.pipeline)}};
  if (c.bundle) j["bundle"] = c.bundle->string();
  if (c.calibration) j["calibration"] = c.calibration->string();
  return j;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"tsq: two-scale post-training quantization toolkit"};
  app.require_subcommand(1);
  app.footer(
      "Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical error.\n"
      "TSQ_THREADS sets the default worker count.");
  Flags f;

  auto* cal = app.add_subcommand("calibrate", "Search quantization parameters for the toy block");
  cal->add_flag("--synthetic", f.synthetic, "Generate a seeded synthetic calibration bundle");
  cal->add_option("--bundle", f.bundle, "Bundle directory with manifest.json");
  cal->add_option("--out", f.out, "Output directory")->required();
  add_common_flags(cal, f);
  add_search_flags(cal, f);

  auto* qz = app.add_subcommand("quantize", "Apply a calibration to a bundle; V-2SF sites are written as V2SF1");
  qz->add_option("--calib", f.calib, "calibration.json")->required();
  qz->add_flag("--synthetic", f.synthetic, "Use a seeded synthetic bundle");
  qz->add_option("--bundle", f.bundle, "Bundle directory with manifest.json");
  qz->add_option("--out", f.out, "Output directory")->required();
  add_common_flags(qz, f);

  auto* ev = app.add_subcommand("eval", "Per-site MSE/SQNR of the quantized block and the int-softmax tolerance");
  ev->add_option("--calib", f.calib, "calibration.json")->required();
  ev->add_option("--mode", f.mode, "integer_path (default) or fake_quant");
  ev->add_flag("--synthetic", f.synthetic, "Evaluate on seeded synthetic inputs (default)");
  ev->add_option("--bundle", f.bundle, "Take weights and inputs from a bundle");
  ev->add_option("--out", f.out, "Directory for eval_report.json and config.json");
  add_common_flags(ev, f);

  auto* cmp = app.add_subcommand("compare", "Uniform vs twin-region vs V-2SF at post-softmax and post-GeLU");
  cmp->add_flag("--synthetic", f.synthetic, "Seeded synthetic inputs (the only source)");
  cmp->add_option("--out", f.out, "Output directory")->required();
  add_common_flags(cmp, f);
  add_search_flags(cmp, f);
  cmp->footer(
      "Writes <site>_<scheme>.csv for sites post_softmax, post_gelu and schemes uniform, twin_region, v2sf.\n"
      "CSV columns: bin_left,bin_right,count; 128 equal-width bins over the FP range of the site.\n"
      "summary.txt marks the lowest-MSE scheme of each site with '*'; summary.json holds the same data.");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  RunConfig c;
  try {
    c = build_config(*sub, f);
  } catch (const Error& e) {
    err << "tsq: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (c.command == "calibrate") return cmd_calibrate(c, out, err);
    if (c.command == "quantize") return cmd_quantize(c, out, err);
    if (c.command == "eval") return cmd_eval(c, out, err);
    return cmd_compare(c, out, err);
  } catch (const UsageError& e) {
    err << "tsq: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericalError& e) {
    err << "tsq: numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    err << "tsq: " << e.what() << "\n";
    return kData;
  }
}

}  // namespace tsq::cli
