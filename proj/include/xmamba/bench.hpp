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

// Real-time-factor benchmarking.
//
// measure_rtf() times a forward function over a sweep of utterance
// durations. Durations become frame counts through the toy front-end's
// window and hop, so 2..10 s maps to roughly 100..500 frames. Every timed
// run is preceded by warmup calls; when one call is too short for the clock
// (under 100 ticks of the measured resolution) each run repeats the call and
// reports the per-call mean, with a warning.
//
// The comparison baseline is a single-head scaled dot-product self-attention
// layer, stacked to the trunk's depth. It exists only to be timed.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "xmamba/frontend.hpp"
#include "xmamba/model.hpp"
#include "xmamba/random.hpp"

namespace xmamba {

struct RtfRecord {
  std::string system;
  double duration_s = 0.0;
  std::size_t frames = 0;
  double wall_time_s = 0.0;  // mean per call over the timed runs
  double rtf = 0.0;          // wall_time_s / duration_s
  std::size_t runs = 0;
  double std_s = 0.0;        // sample standard deviation of the per-call time
  double min_time_s = 0.0;
  std::size_t repeats = 1;   // calls per timed run
};

struct BenchOptions {
  std::vector<double> durations_s{2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::size_t runs = 20;
  std::size_t warmup = 3;
  FrontendConfig frontend{};
  std::ostream* warnings = &std::cerr;

  void validate() const {
    require(!durations_s.empty(), "bench: no durations", ErrorKind::kUsage);
    require(runs >= 1, "bench: runs must be >= 1", ErrorKind::kUsage);
    for (std::size_t i = 0; i < durations_s.size(); ++i) {
      require(durations_s[i] > 0.0, "bench: durations must be positive", ErrorKind::kUsage);
      require(i == 0 || durations_s[i] > durations_s[i - 1],
              "bench: durations must be strictly increasing", ErrorKind::kUsage);
    }
  }
};

inline std::size_t samples_for(double duration_s, const FrontendConfig& fe) {
  return static_cast<std::size_t>(std::llround(duration_s * fe.sample_rate));
}

inline std::size_t frames_for(double duration_s, const FrontendConfig& fe = {}) {
  return frame_count(samples_for(duration_s, fe), fe);
}

/// Smallest observed non-zero step of steady_clock, in seconds.
inline double timer_resolution() {
  using clock = std::chrono::steady_clock;
  static const double res = [] {
    double best = 1.0;
    for (int i = 0; i < 200; ++i) {
      const auto a = clock::now();
      auto b = clock::now();
      while (b == a) b = clock::now();
      best = std::min(best, std::chrono::duration<double>(b - a).count());
    }
    return best;
  }();
  return res;
}

/// Keeps a computed value alive so the forward call cannot be elided.
template <typename T>
void keep_alive(const T& v) {
  asm volatile("" : : "g"(&v) : "memory");
}

/// Times `forward` on inputs built by `make_input(duration_s, frames)`.
/// Input construction is not timed.
template <typename Input>
std::vector<RtfRecord> measure_rtf(const std::string& system,
                                   const std::function<Input(double, std::size_t)>& make_input,
                                   const std::function<void(const Input&)>& forward,
                                   const BenchOptions& o = {}) {
  using clock = std::chrono::steady_clock;
  o.validate();
  const double floor_s = 100.0 * timer_resolution();
  std::vector<RtfRecord> out;
  bool warned = false;
  for (double dur : o.durations_s) {
    const std::size_t frames = frames_for(dur, o.frontend);
    const Input input = make_input(dur, frames);
    for (std::size_t i = 0; i < o.warmup; ++i) forward(input);
    auto time_calls = [&](std::size_t reps) {
      const auto t0 = clock::now();
      for (std::size_t r = 0; r < reps; ++r) forward(input);
      return std::chrono::duration<double>(clock::now() - t0).count();
    };
    std::size_t reps = 1;
    while (reps < (std::size_t(1) << 24) && time_calls(reps) < floor_s) reps *= 2;
    if (reps > 1 && !warned && o.warnings != nullptr) {
      *o.warnings << "warning: " << system << ": one call takes under 100 clock ticks at "
                  << dur << " s; repeating each run " << reps << " times\n";
      warned = true;
    }
    std::vector<double> per_call(o.runs);
    for (auto& t : per_call) t = time_calls(reps) / double(reps);
    RtfRecord r;
    r.system = system;
    r.duration_s = dur;
    r.frames = frames;
    r.runs = o.runs;
    r.repeats = reps;
    r.wall_time_s = std::accumulate(per_call.begin(), per_call.end(), 0.0) / double(o.runs);
    r.min_time_s = *std::min_element(per_call.begin(), per_call.end());
    if (o.runs > 1) {
      double ss = 0.0;
      for (double t : per_call) ss += (t - r.wall_time_s) * (t - r.wall_time_s);
      r.std_s = std::sqrt(ss / double(o.runs - 1));
    }
    r.rtf = r.wall_time_s / dur;
    out.push_back(r);
  }
  return out;
}

/// Single-head self-attention weights. Q, K and V are square projections.
template <typename T>
struct AttentionParams {
  Matrix<T> wq, wk, wv;  // [D x D]

  AttentionParams() = default;
  explicit AttentionParams(std::size_t d) : wq(d, d), wk(d, d), wv(d, d) {}

  std::size_t dim() const noexcept { return wq.rows(); }

  void initialize(Rng& rng) {
    const double s = 1.0 / std::sqrt(double(dim()));
    for (auto* m : {&wq, &wk, &wv})
      for (auto& v : m->values()) v = static_cast<T>(s * rng.normal());
  }
};

template <typename T>
AttentionParams<T> init_attention(std::size_t d, std::uint64_t seed) {
  AttentionParams<T> p(d);
  Rng rng(seed);
  p.initialize(rng);
  return p;
}

/// softmax(Q K^T / sqrt(D)) as a [T x T] row-stochastic matrix.
template <typename T>
Matrix<T> attention_weights(const Matrix<T>& x, const AttentionParams<T>& p) {
  require(x.cols() == p.dim(), "attention: input width " + std::to_string(x.cols()) +
                                   " does not match D = " + std::to_string(p.dim()));
  const Matrix<T> q = matmul(x, p.wq), k = matmul(x, p.wk);
  const std::size_t L = x.rows(), D = p.dim();
  const T scale = T(1) / std::sqrt(T(D));
  Matrix<T> w(L, L);
  for (std::size_t i = 0; i < L; ++i) {
    const T* qi = q.row(i).data();
    T* wi = w.row(i).data();
    T m = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < L; ++j) {
      const T* kj = k.row(j).data();
      T s = T(0);
      for (std::size_t d = 0; d < D; ++d) s += qi[d] * kj[d];
      wi[j] = s * scale;
      m = std::max(m, wi[j]);
    }
    T z = T(0);
    for (std::size_t j = 0; j < L; ++j) {
      wi[j] = std::exp(wi[j] - m);
      z += wi[j];
    }
    for (std::size_t j = 0; j < L; ++j) wi[j] /= z;
  }
  return w;
}

/// Attention(x) = softmax(Q K^T / sqrt(D)) V, O(T^2 D) by construction.
template <typename T>
Matrix<T> attention_reference_forward(const Matrix<T>& x, const AttentionParams<T>& p) {
  const Matrix<T> w = attention_weights(x, p);
  return matmul(w, matmul(x, p.wv));
}

/// The timing baseline: `layers` residual attention layers, h <- h + Attn(h).
template <typename T>
Matrix<T> attention_stack_forward(const Matrix<T>& x, const std::vector<AttentionParams<T>>& layers) {
  Matrix<T> h = x;
  for (const auto& l : layers) add_inplace(h, attention_reference_forward(h, l));
  return h;
}

enum class BenchMode { kTrunk, kFrontend };

inline std::string_view to_string(BenchMode m) {
  return m == BenchMode::kTrunk ? "trunk" : "frontend";
}

inline BenchMode parse_bench_mode(std::string_view s) {
  if (s == "trunk") return BenchMode::kTrunk;
  if (s == "frontend") return BenchMode::kFrontend;
  throw Error("unknown bench mode '" + std::string(s) + "' (expected trunk|frontend)",
              ErrorKind::kUsage);
}

/// System label as it appears in results, e.g. "dua" or "frontend+attention".
inline std::string system_label(BenchMode mode, const std::string& name) {
  return mode == BenchMode::kTrunk ? name : "frontend+" + name;
}

/// The scan trunk of `mc` against an attention stack of the same depth and
/// width (n_blocks layers at D = d_model).
///
/// kTrunk times the stacks alone on random [T x d_model] inputs. kFrontend
/// times waveform to detection output: the toy front-end, the input
/// projection, then the trunk with pooling and head, or the attention stack
/// with mean pooling.
inline std::vector<RtfRecord> bench_trunk_vs_attention(const ModelConfig& mc, BenchMode mode,
                                                       const BenchOptions& o = {}) {
  mc.validate();
  const ModelParams<Real> p = init_params<Real>(mc);
  std::vector<AttentionParams<Real>> layers;
  for (std::size_t i = 0; i < mc.n_blocks; ++i)
    layers.push_back(init_attention<Real>(mc.d_model, mc.seed + 1000 + i));
  std::vector<RtfRecord> out;
  auto append = [&](std::vector<RtfRecord> r) { out.insert(out.end(), r.begin(), r.end()); };
  const std::string trunk_name = std::string(to_string(mc.variant));

  if (mode == BenchMode::kTrunk) {
    const std::function<Matrix<Real>(double, std::size_t)> make = [&](double dur, std::size_t t) {
      Rng rng(mc.seed ^ static_cast<std::uint64_t>(dur * 1000.0));
      Matrix<Real> x(t, mc.d_model);
      for (auto& v : x.values()) v = static_cast<Real>(rng.normal());
      return x;
    };
    append(measure_rtf<Matrix<Real>>(
        system_label(mode, trunk_name), make,
        [&](const Matrix<Real>& x) { keep_alive(stack_forward(x, p.trunk)(0, 0)); }, o));
    append(measure_rtf<Matrix<Real>>(
        system_label(mode, "attention"), make,
        [&](const Matrix<Real>& x) { keep_alive(attention_stack_forward(x, layers)(0, 0)); }, o));
    return out;
  }

  require(mc.d_feat == o.frontend.out_dim,
          "bench: frontend mode needs model.d_feat (" + std::to_string(mc.d_feat) +
              ") to equal the front-end output width (" + std::to_string(o.frontend.out_dim) + ")",
          ErrorKind::kUsage);
  ToyFrontend fe(o.frontend);
  const std::function<Waveform(double, std::size_t)> make = [&](double dur, std::size_t) {
    Rng rng(mc.seed ^ static_cast<std::uint64_t>(dur * 1000.0));
    Waveform w;
    w.sample_rate = o.frontend.sample_rate;
    w.samples.resize(samples_for(dur, o.frontend));
    for (auto& v : w.samples) v = static_cast<float>(0.1 * rng.normal());
    return w;
  };
  append(measure_rtf<Waveform>(
      system_label(mode, trunk_name), make,
      [&](const Waveform& w) {
        keep_alive(predict(fe.operator()<Real>(w), p, mc.pooling).score());
      },
      o));
  append(measure_rtf<Waveform>(
      system_label(mode, "attention"), make,
      [&](const Waveform& w) {
        const Matrix<Real> h = attention_stack_forward(project_features(fe.operator()<Real>(w), p), layers);
        keep_alive(mean_pool(h)(0, 0));
      },
      o));
  return out;
}

namespace detail {

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace detail

/// CSV with columns system,duration_s,rtf,std. `std` is the standard
/// deviation of the RTF, i.e. std_s / duration_s.
inline std::string results_csv(const std::vector<RtfRecord>& records) {
  std::string s = "system,duration_s,rtf,std\n";
  for (const auto& r : records)
    s += r.system + "," + detail::fmt("%.6g", r.duration_s) + "," + detail::fmt("%.9g", r.rtf) +
         "," + detail::fmt("%.9g", r.std_s / r.duration_s) + "\n";
  return s;
}

/// Line chart of RTF against duration, one polyline per system in order of
/// first appearance.
inline std::string results_svg(const std::vector<RtfRecord>& records) {
  require(!records.empty(), "svg: no records to plot");
  std::vector<std::string> order;
  std::map<std::string, std::vector<const RtfRecord*>> by_system;
  double x_max = 0.0, y_max = 0.0, x_min = records.front().duration_s;
  for (const auto& r : records) {
    if (!by_system.count(r.system)) order.push_back(r.system);
    by_system[r.system].push_back(&r);
    x_max = std::max(x_max, r.duration_s);
    x_min = std::min(x_min, r.duration_s);
    y_max = std::max(y_max, r.rtf);
  }
  if (y_max <= 0.0) y_max = 1.0;
  if (x_max <= x_min) x_max = x_min + 1.0;
  const double W = 640, H = 400, left = 70, right = 170, top = 20, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;
  auto px = [&](double d) { return left + pw * (d - x_min) / (x_max - x_min); };
  auto py = [&](double v) { return top + ph * (1.0 - v / y_max); };
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" "
       "viewBox=\"0 0 640 400\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
  s += "<line x1=\"" + detail::fmt("%.2f", left) + "\" y1=\"" + detail::fmt("%.2f", top + ph) +
       "\" x2=\"" + detail::fmt("%.2f", left + pw) + "\" y2=\"" + detail::fmt("%.2f", top + ph) +
       "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + detail::fmt("%.2f", left) + "\" y1=\"" + detail::fmt("%.2f", top) +
       "\" x2=\"" + detail::fmt("%.2f", left) + "\" y2=\"" + detail::fmt("%.2f", top + ph) +
       "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = y_max * i / 4.0;
    s += "<text x=\"" + detail::fmt("%.2f", left - 6) + "\" y=\"" + detail::fmt("%.2f", py(v) + 4) +
         "\" text-anchor=\"end\">" + detail::fmt("%.3g", v) + "</text>\n";
  }
  for (const auto* r : by_system[order.front()])
    s += "<text x=\"" + detail::fmt("%.2f", px(r->duration_s)) + "\" y=\"" +
         detail::fmt("%.2f", top + ph + 18) + "\" text-anchor=\"middle\">" +
         detail::fmt("%.3g", r->duration_s) + "</text>\n";
  s += "<text x=\"" + detail::fmt("%.2f", left + pw / 2) + "\" y=\"" + detail::fmt("%.2f", H - 10) +
       "\" text-anchor=\"middle\">duration (s)</text>\n";
  s += "<text x=\"16\" y=\"" + detail::fmt("%.2f", top + ph / 2) +
       "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " + detail::fmt("%.2f", top + ph / 2) +
       ")\">RTF</text>\n";
  for (std::size_t k = 0; k < order.size(); ++k) {
    const char* color = palette[k % (sizeof palette / sizeof *palette)];
    s += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"";
    bool first = true;
    for (const auto* r : by_system[order[k]]) {
      if (!first) s += " ";
      s += detail::fmt("%.2f", px(r->duration_s)) + "," + detail::fmt("%.2f", py(r->rtf));
      first = false;
    }
    s += "\"/>\n";
    const double ly = top + 16 + 18.0 * double(k);
    s += "<line x1=\"" + detail::fmt("%.2f", left + pw + 12) + "\" y1=\"" + detail::fmt("%.2f", ly - 4) +
         "\" x2=\"" + detail::fmt("%.2f", left + pw + 32) + "\" y2=\"" + detail::fmt("%.2f", ly - 4) +
         "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    s += "<text x=\"" + detail::fmt("%.2f", left + pw + 38) + "\" y=\"" + detail::fmt("%.2f", ly) +
         "\">" + order[k] + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream o(path, std::ios::binary);
  require(bool(o), "cannot write '" + path + "'");
  o << text;
  require(bool(o), "write failed for '" + path + "'");
}

enum class ResultFormat { kCsv, kSvg };

inline void emit_results(const std::vector<RtfRecord>& records, ResultFormat format,
                         const std::string& path) {
  write_text_file(path, format == ResultFormat::kCsv ? results_csv(records) : results_svg(records));
}

}  // namespace xmamba
