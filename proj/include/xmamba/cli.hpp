// Copyright 2026 The xmamba Authors
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

// Subcommand implementations behind tools/xmamba. Everything here reports
// failures by throwing xmamba::Error; the executable maps ErrorKind to the
// process exit status (1 usage/config, 2 data, 3 numerical).

#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include "xmamba/bench.hpp"
#include "xmamba/checkpoint.hpp"
#include "xmamba/config.hpp"
#include "xmamba/metrics.hpp"
#include "xmamba/synth.hpp"
#include "xmamba/train.hpp"

namespace xmamba::cli {

namespace fs = std::filesystem;

inline std::vector<KeySpec> config_schema() {
  using V = ValueType;
  return {
      {"run.out_root", V::kString, "runs", "parent of timestamped run directories"},
      {"run.run_dir", V::kString, "", "explicit run directory (empty: <out_root>/<time>_seed<seed>)"},
      {"data.train_manifest", V::kString, "", "training manifest"},
      {"data.dev_manifest", V::kString, "", "development manifest"},
      {"model.d_feat", V::kInt, "1024", "input feature width"},
      {"model.d_model", V::kInt, "144", "trunk width"},
      {"model.d_inner", V::kInt, "256", "inner (expanded) width"},
      {"model.n_state", V::kInt, "16", "SSM state size"},
      {"model.n_blocks", V::kInt, "12", "trunk depth"},
      {"model.k_conv", V::kInt, "3", "causal conv kernel"},
      {"model.variant", V::kString, "dua", "unidirectional|inn|ext|dua"},
      {"model.pooling", V::kString, "mean", "mean|max"},
      {"model.weight_bonafide", V::kReal, "0", "loss weight, <= 0 for inverse frequency"},
      {"model.weight_spoof", V::kReal, "0", "loss weight, <= 0 for inverse frequency"},
      {"model.seed", V::kInt, "0", "parameter initialisation seed"},
      {"train.lr", V::kReal, "1e-6", "Adam learning rate"},
      {"train.weight_decay", V::kReal, "1e-4", "decoupled weight decay"},
      {"train.batch_size", V::kInt, "20", ""},
      {"train.patience", V::kInt, "7", "epochs without dev improvement before stopping"},
      {"train.top_k", V::kInt, "5", "checkpoints averaged"},
      {"train.max_epochs", V::kInt, "100", ""},
      {"train.crop_samples", V::kInt, std::to_string(kDefaultCropSamples), "waveform crop"},
      {"train.seed", V::kInt, "0", "data order and augmentation seed"},
      {"train.scan", V::kString, "sequential", "sequential|parallel"},
      {"train.sweep_variants", V::kString, "", "comma list; trains each and writes a comparison"},
      {"augment.mode", V::kString, "none", "none|la|df"},
      {"augment.conv_bands", V::kString, "1,5", "band count range"},
      {"augment.conv_center_hz", V::kString, "20,8000", ""},
      {"augment.conv_bandwidth_hz", V::kString, "100,1000", ""},
      {"augment.conv_taps", V::kString, "11,101", "FIR length range"},
      {"augment.conv_band_gain", V::kString, "0,1", ""},
      {"augment.conv_keep_direct", V::kBool, "true", "include the direct path"},
      {"augment.nonlinear_order", V::kInt, "3", "highest polynomial power"},
      {"augment.nonlinear_gain", V::kString, "0,0.3", ""},
      {"augment.impulse_density", V::kString, "0.01,0.1", "fraction of samples hit"},
      {"augment.impulse_snr_db", V::kString, "10,30", ""},
      {"augment.color_bands", V::kString, "1,5", ""},
      {"augment.color_center_hz", V::kString, "20,8000", ""},
      {"augment.color_bandwidth_hz", V::kString, "100,1000", ""},
      {"augment.color_taps", V::kString, "11,101", ""},
      {"augment.color_band_gain", V::kString, "0,1", ""},
      {"augment.stationary_snr_db", V::kString, "10,40", ""},
      {"bench.mode", V::kString, "trunk", "trunk|frontend|both"},
      {"bench.systems", V::kString, "trunk,attention", "subset of trunk,attention"},
      {"bench.durations", V::kString, "2,3,4,5,6,7,8,9,10", "seconds, increasing"},
      {"bench.runs", V::kInt, "20", ""},
      {"bench.warmup", V::kInt, "3", ""},
  };
}

inline Config load_config(const std::string& path, const std::vector<std::string>& overrides) {
  Config c(config_schema());
  if (!path.empty()) c.parse_file(path);
  for (const auto& kv : overrides) c.apply_override(kv);
  return c;
}

namespace detail {

inline std::vector<double> reals(const Config& c, const std::string& key) {
  std::vector<double> out;
  for (const auto& item : c.list(key)) {
    double v = 0;
    require(xmamba::detail::parse_real(item, v),
            "config key '" + key + "' expects numbers, got '" + item + "'", ErrorKind::kUsage);
    out.push_back(v);
  }
  return out;
}

inline Range range(const Config& c, const std::string& key) {
  const auto v = reals(c, key);
  require(v.size() == 2 && v[0] <= v[1], "config key '" + key + "' expects 'lo,hi' with lo <= hi",
          ErrorKind::kUsage);
  return {v[0], v[1]};
}

inline std::pair<int, int> int_range(const Config& c, const std::string& key) {
  const Range r = range(c, key);
  require(r.lo == std::floor(r.lo) && r.hi == std::floor(r.hi),
          "config key '" + key + "' expects integers", ErrorKind::kUsage);
  return {int(r.lo), int(r.hi)};
}

inline BandFilterConfig band_filter(const Config& c, const std::string& prefix) {
  BandFilterConfig f;
  std::tie(f.min_bands, f.max_bands) = int_range(c, prefix + "_bands");
  f.center_hz = range(c, prefix + "_center_hz");
  f.bandwidth_hz = range(c, prefix + "_bandwidth_hz");
  std::tie(f.min_taps, f.max_taps) = int_range(c, prefix + "_taps");
  f.band_gain = range(c, prefix + "_band_gain");
  return f;
}

// Converts parse errors of enum-like keys into messages naming the key.
template <typename F>
auto keyed(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error("config key '" + key + "': " + e.what(), ErrorKind::kUsage);
  }
}

}  // namespace detail

struct BenchSettings {
  std::vector<BenchMode> modes{BenchMode::kTrunk};
  bool trunk = true;
  bool attention = true;
  BenchOptions options;
};

struct Settings {
  ModelConfig model;
  TrainConfig train;
  AugmentConfig augment;
  BenchSettings bench;
  std::string train_manifest, dev_manifest;
  std::vector<Variant> sweep;
  std::string out_root, run_dir;
};

inline Settings settings_from(const Config& c) {
  Settings s;
  ModelConfig& m = s.model;
  m.d_feat = c.count("model.d_feat");
  m.d_model = c.count("model.d_model");
  m.d_inner = c.count("model.d_inner");
  m.n_state = c.count("model.n_state");
  m.n_blocks = c.count("model.n_blocks");
  m.k_conv = c.count("model.k_conv");
  m.variant = detail::keyed("model.variant", [&] { return parse_variant(c.str("model.variant")); });
  m.pooling = detail::keyed("model.pooling", [&] { return parse_pooling(c.str("model.pooling")); });
  m.weight_bonafide = c.real("model.weight_bonafide");
  m.weight_spoof = c.real("model.weight_spoof");
  m.seed = c.count("model.seed");
  m.validate();

  TrainConfig& t = s.train;
  t.lr = c.real("train.lr");
  t.weight_decay = c.real("train.weight_decay");
  t.batch_size = c.count("train.batch_size");
  t.patience = c.count("train.patience");
  t.top_k = c.count("train.top_k");
  t.max_epochs = c.count("train.max_epochs");
  t.crop_samples = c.count("train.crop_samples");
  t.seed = c.count("train.seed");
  t.scan = detail::keyed("train.scan", [&] { return parse_scan_algorithm(c.str("train.scan")); });
  t.validate();
  for (const auto& v : c.list("train.sweep_variants"))
    s.sweep.push_back(detail::keyed("train.sweep_variants", [&] { return parse_variant(v); }));

  AugmentConfig& a = s.augment;
  a.mode = detail::keyed("augment.mode", [&] { return parse_augment_mode(c.str("augment.mode")); });
  a.conv_filter = detail::band_filter(c, "augment.conv");
  a.conv_keep_direct = c.boolean("augment.conv_keep_direct");
  a.nonlinear_order = static_cast<int>(c.integer("augment.nonlinear_order"));
  a.nonlinear_gain = detail::range(c, "augment.nonlinear_gain");
  a.impulse_density = detail::range(c, "augment.impulse_density");
  a.impulse_snr_db = detail::range(c, "augment.impulse_snr_db");
  a.color_filter = detail::band_filter(c, "augment.color");
  a.stationary_snr_db = detail::range(c, "augment.stationary_snr_db");
  a.validate();

  BenchSettings& b = s.bench;
  const std::string mode = c.str("bench.mode");
  if (mode == "both")
    b.modes = {BenchMode::kTrunk, BenchMode::kFrontend};
  else
    b.modes = {detail::keyed("bench.mode", [&] { return parse_bench_mode(mode); })};
  b.trunk = b.attention = false;
  for (const auto& sys : c.list("bench.systems")) {
    if (sys == "trunk")
      b.trunk = true;
    else if (sys == "attention")
      b.attention = true;
    else
      throw Error("config key 'bench.systems': unknown system '" + sys + "'", ErrorKind::kUsage);
  }
  require(b.trunk || b.attention, "config key 'bench.systems' selects nothing", ErrorKind::kUsage);
  b.options.durations_s = detail::reals(c, "bench.durations");
  b.options.runs = c.count("bench.runs");
  b.options.warmup = c.count("bench.warmup");
  detail::keyed("bench.durations", [&] { b.options.validate(); return 0; });

  s.train_manifest = c.str("data.train_manifest");
  s.dev_manifest = c.str("data.dev_manifest");
  s.out_root = c.str("run.out_root");
  s.run_dir = c.str("run.run_dir");
  return s;
}

/// `<root>/<UTC yyyymmdd-hhmmss>_seed<seed>`, suffixed -1, -2, ... if taken.
/// An explicit directory is used as given but must not already hold a run.
inline fs::path make_run_dir(const std::string& root, const std::string& explicit_dir,
                             std::uint64_t seed, const std::string& marker = "resolved.ini") {
  if (!explicit_dir.empty()) {
    const fs::path d(explicit_dir);
    require(!fs::exists(d / marker),
            "run directory '" + d.string() + "' already holds a run; refusing to overwrite",
            ErrorKind::kUsage);
    fs::create_directories(d);
    return d;
  }
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  const std::string base = std::string(stamp) + "_seed" + std::to_string(seed);
  fs::path d = fs::path(root) / base;
  for (int i = 1; fs::exists(d); ++i) d = fs::path(root) / (base + "-" + std::to_string(i));
  fs::create_directories(d);
  return d;
}

inline std::string format_score(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline void write_scores(const fs::path& path, const std::vector<TrialScore>& scores) {
  std::ofstream o(path);
  require(bool(o), "cannot write '" + path.string() + "'");
  for (const auto& s : scores) o << s.utt_id << ' ' << format_score(s.score) << '\n';
}

struct VariantOutcome {
  Variant variant;
  fs::path dir;
  std::size_t parameters = 0;
  std::size_t epochs = 0;
  double best_epoch_eer = 0.0;
  double averaged_eer = 0.0;
  double min_tdcf = 0.0;  // default cost model
  double seconds = 0.0;
};

/// Trains one model into `dir`: train.log, model.ckpt and dev.scores.
inline VariantOutcome train_into(const fs::path& dir, const ModelConfig& mc, const TrainConfig& tc,
                                 const FeaturePipeline& pipe, const std::vector<Utterance>& tr,
                                 const std::vector<Utterance>& dev, std::ostream& log_out) {
  fs::create_directories(dir);
  std::ofstream log(dir / "train.log", std::ios::app);
  require(bool(log), "cannot write '" + (dir / "train.log").string() + "'");
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult<Real> r = train<Real>(tr, dev, mc, tc, pipe, [&](const EpochRecord& e) {
    char line[128];
    std::snprintf(line, sizeof line, "epoch=%zu loss=%.6f dev_eer=%.6f", e.epoch, e.loss,
                  e.dev_eer);
    log << line << '\n' << std::flush;
    log_out << to_string(mc.variant) << ' ' << line << '\n' << std::flush;
  });
  if (r.short_pool)
    std::cerr << "warning: only " << r.top.size() << " checkpoints for top-" << tc.top_k
              << " averaging; averaged all of them\n";
  save_params((dir / "model.ckpt").string(), mc, r.params, tc.crop_samples);
  const auto scores = score_utterances(r.params, dev, mc.pooling, tc.scan);
  write_scores(dir / "dev.scores", scores);
  VariantOutcome o;
  o.variant = mc.variant;
  o.dir = dir;
  o.parameters = parameter_count(r.params);
  o.epochs = r.history.size();
  o.best_epoch_eer = r.top.front().dev_eer;
  o.averaged_eer = r.averaged_dev_eer;
  o.min_tdcf = min_tdcf(scores, TdcfCostModel{}).min_tdcf;
  o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return o;
}

inline std::string comparison_table(const std::vector<VariantOutcome>& rows) {
  std::ostringstream o;
  o << "variant\tparams\tepochs\tbest_epoch_eer\taveraged_eer\tmin_tdcf\tseconds\n";
  for (const auto& r : rows) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s\t%zu\t%zu\t%.6f\t%.6f\t%.6f\t%.1f\n",
                  std::string(to_string(r.variant)).c_str(), r.parameters, r.epochs,
                  r.best_epoch_eer, r.averaged_eer, r.min_tdcf, r.seconds);
    o << buf;
  }
  return o.str();
}

struct TrainSummary {
  fs::path run_dir;
  std::vector<VariantOutcome> outcomes;
};

/// `train`: writes resolved.ini, then one model (or one per sweep variant,
/// each in its own subdirectory, plus comparison.tsv).
inline TrainSummary cmd_train(const Config& config, std::ostream& out = std::cout) {
  const Settings s = settings_from(config);
  require(!s.train_manifest.empty() && !s.dev_manifest.empty(),
          "config keys 'data.train_manifest' and 'data.dev_manifest' are required",
          ErrorKind::kUsage);
  const auto train_entries = read_manifest(s.train_manifest);
  const auto dev_entries = read_manifest(s.dev_manifest);
  for (const auto* set : {&train_entries, &dev_entries})
    for (const auto& e : *set)
      require(e.label.has_value(), "manifest entry '" + e.utt_id + "' has no label");
  const FeaturePipeline pipe(s.train.crop_samples, s.augment);
  const auto tr = pipe.load(train_entries);
  const auto dev = pipe.load(dev_entries);

  TrainSummary summary;
  summary.run_dir = make_run_dir(s.out_root, s.run_dir, s.train.seed);
  {
    std::ofstream o(summary.run_dir / "resolved.ini");
    require(bool(o), "cannot write resolved.ini in '" + summary.run_dir.string() + "'");
    o << config.to_ini();
  }
  out << "run_dir=" << summary.run_dir.string() << '\n';
  if (s.sweep.empty()) {
    summary.outcomes.push_back(train_into(summary.run_dir, s.model, s.train, pipe, tr, dev, out));
  } else {
    for (Variant v : s.sweep) {
      ModelConfig mc = s.model;
      mc.variant = v;
      summary.outcomes.push_back(
          train_into(summary.run_dir / std::string(to_string(v)), mc, s.train, pipe, tr, dev, out));
    }
    const std::string table = comparison_table(summary.outcomes);
    std::ofstream o(summary.run_dir / "comparison.tsv");
    require(bool(o), "cannot write comparison.tsv");
    o << table;
    out << table;
  }
  for (const auto& r : summary.outcomes)
    out << "checkpoint=" << (r.dir / "model.ckpt").string() << '\n'
        << "dev_eer=" << format_score(r.averaged_eer) << '\n';
  return summary;
}

struct ScoreSummary {
  std::size_t scored = 0;
  std::size_t failed = 0;
};

/// `score`: one `<utt_id> <score>` line per manifest entry in manifest
/// order. Entries that cannot be read become `# ERROR <id> <reason>` lines,
/// and the file then ends with a `# PARTIAL` line.
inline ScoreSummary cmd_score(const std::string& ckpt_path, const std::string& manifest_path,
                              const std::string& out_path) {
  const Checkpoint<Real> ck = load_params<Real>(ckpt_path);
  const auto entries = read_manifest(manifest_path);
  const FeaturePipeline pipe(ck.crop_samples, AugmentConfig{});
  const fs::path out(out_path);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream o(out);
  require(bool(o), "cannot write score file '" + out_path + "'");
  ScoreSummary s;
  for (const auto& e : entries) {
    try {
      const Utterance u = pipe.load_one(e);
      const double score = double(predict(u.eval_features, ck.params, ck.config.pooling).score());
      require(std::isfinite(score), "non-finite score", ErrorKind::kNumerical);
      o << e.utt_id << ' ' << format_score(score) << '\n';
      ++s.scored;
    } catch (const std::exception& ex) {
      std::string why = ex.what();
      for (char& ch : why)
        if (ch == '\n') ch = ' ';
      o << "# ERROR " << e.utt_id << ' ' << why << '\n';
      std::cerr << "error: " << e.utt_id << ": " << why << '\n';
      ++s.failed;
    }
  }
  if (s.failed > 0) o << "# PARTIAL " << s.failed << " of " << entries.size() << " not scored\n";
  o.flush();
  require(bool(o), "write failed for '" + out_path + "'");
  return s;
}

/// `eval`: key=value report. min_tdcf only when a cost model is given.
inline std::string cmd_eval(const std::string& scores, const std::string& protocol,
                            const std::string& tdcf_path = "") {
  const JoinedTrials j = read_and_join(scores, protocol);
  for (const auto& id : j.unmatched_scores)
    std::cerr << "warning: scored utterance '" << id << "' is not in the protocol\n";
  for (const auto& id : j.unmatched_protocol)
    std::cerr << "warning: protocol utterance '" << id << "' has no score\n";
  const EerResult e = compute_eer(j.trials);
  std::ostringstream o;
  o << "eer=" << format_score(e.eer) << '\n' << "threshold=" << format_score(e.threshold) << '\n';
  if (!tdcf_path.empty()) {
    const TdcfResult t = min_tdcf(j.trials, read_cost_model(tdcf_path));
    o << "min_tdcf=" << format_score(t.min_tdcf) << '\n'
      << "tdcf_threshold=" << format_score(t.threshold) << '\n';
  }
  o << "trials=" << j.trials.size() << '\n'
    << "unmatched_scores=" << j.unmatched_scores.size() << '\n'
    << "unmatched_protocol=" << j.unmatched_protocol.size() << '\n';
  return o.str();
}

/// `bench`: RTF sweep for the configured trunk and the attention stack;
/// writes rtf.csv and rtf.svg under `out_dir`.
inline std::vector<RtfRecord> cmd_bench(const Config& config, const std::string& out_dir,
                                        std::optional<std::size_t> runs,
                                        std::ostream& out = std::cout) {
  Settings s = settings_from(config);
  if (runs) {
    require(*runs >= 1, "--runs must be >= 1", ErrorKind::kUsage);
    s.bench.options.runs = *runs;
  }
  fs::create_directories(out_dir);
  {
    std::ofstream o(fs::path(out_dir) / "resolved.ini");
    require(bool(o), "cannot write under '" + out_dir + "'");
    o << config.to_ini();
  }
  std::vector<RtfRecord> all;
  for (BenchMode mode : s.bench.modes) {
    for (auto& r : bench_trunk_vs_attention(s.model, mode, s.bench.options)) {
      const bool is_attention = r.system.ends_with("attention");
      if ((is_attention && s.bench.attention) || (!is_attention && s.bench.trunk))
        all.push_back(std::move(r));
    }
  }
  emit_results(all, ResultFormat::kCsv, (fs::path(out_dir) / "rtf.csv").string());
  emit_results(all, ResultFormat::kSvg, (fs::path(out_dir) / "rtf.svg").string());
  out << "system\tduration_s\tframes\trtf\tstd_s\trepeats\n";
  for (const auto& r : all) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s\t%g\t%zu\t%.6g\t%.3g\t%zu\n", r.system.c_str(),
                  r.duration_s, r.frames, r.rtf, r.std_s, r.repeats);
    out << buf;
  }
  return all;
}

/// `synth`: the desk corpus (n per class train, ceil(n/2) per class dev).
inline void cmd_synth(std::uint64_t seed, std::size_t n, const std::string& out_dir,
                      std::ostream& out = std::cout) {
  require(n >= 1, "--n must be >= 1", ErrorKind::kUsage);
  write_synth_corpus(out_dir, seed, n);
  const fs::path d(out_dir);
  out << "train_manifest=" << (d / "train.lst").string() << '\n'
      << "dev_manifest=" << (d / "dev.lst").string() << '\n'
      << "train_protocol=" << (d / "train.protocol").string() << '\n'
      << "dev_protocol=" << (d / "dev.protocol").string() << '\n';
}

}  // namespace xmamba::cli
