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

// Synthetic bonafide/spoof corpus for desk-scale experiments.
//
// Every utterance is a train of harmonic "syllables" whose pitch glides
// exponentially between a low and a high frequency, with a slow random walk
// on log-pitch as jitter and a symmetric Hann envelope. Bonafide syllables
// glide upwards; spoof syllables use the identical synthesis with the glide
// running downwards. The two classes therefore share their long-term
// spectrum and level (each utterance is RMS-normalized); only the direction
// of pitch movement over time tells them apart.

#pragma once

#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "xmamba/audio.hpp"
#include "xmamba/augment.hpp"
#include "xmamba/random.hpp"
#include "xmamba/types.hpp"

namespace xmamba {

struct SynthConfig {
  int sample_rate = 16000;
  Range duration_s{2.0, 4.0};
  Range syllable_s{0.15, 0.40};
  Range gap_s{0.03, 0.12};
  Range low_hz{90.0, 160.0};
  Range glide_ratio{1.4, 2.0};
  double max_harmonic_hz = 4000.0;
  double jitter = 0.02;  // std of the log-pitch random walk over one syllable
  double noise_floor = 1e-3;
  double target_rms = 0.1;
};

struct SynthUtterance {
  std::string utt_id;
  Label label;
  Waveform wave;
};

namespace detail {

inline void add_syllable(std::vector<float>& out, std::size_t start, std::size_t len, double f0,
                         double f1, const SynthConfig& c, double tilt, Rng& rng) {
  const double sr = c.sample_rate;
  const double step = c.jitter / std::sqrt(double(len));
  const int harmonics = std::max(1, int(c.max_harmonic_hz / std::max(f0, f1)));
  // Harmonic k has phase k * theta + offset_k; e^{i k theta} comes from
  // repeated multiplication by e^{i theta}.
  std::vector<std::complex<double>> offset(harmonics);
  for (int k = 0; k < harmonics; ++k)
    offset[k] = std::pow(double(k + 1), -tilt) *
                std::polar(1.0, rng.uniform(0.0, 2.0 * std::numbers::pi));
  double theta = 0.0, walk = 0.0;
  for (std::size_t n = 0; n < len && start + n < out.size(); ++n) {
    const double u = len > 1 ? double(n) / double(len - 1) : 0.0;
    walk += step * rng.normal();
    const double f = f0 * std::pow(f1 / f0, u) * std::exp(walk);
    const double env = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * u);
    theta = std::fmod(theta + 2.0 * std::numbers::pi * f / sr, 2.0 * std::numbers::pi);
    const std::complex<double> z = std::polar(1.0, theta);
    std::complex<double> zk = z;
    double s = 0.0;
    for (int k = 0; k < harmonics; ++k) {
      s += (zk * offset[k]).imag();
      zk *= z;
    }
    out[start + n] += static_cast<float>(env * s);
  }
}

}  // namespace detail

/// One utterance of the given class, fully determined by `rng`.
inline Waveform synth_utterance(Label label, const SynthConfig& c, Rng& rng) {
  const std::size_t n =
      static_cast<std::size_t>(std::llround(c.duration_s.draw(rng) * c.sample_rate));
  std::vector<float> out(n, 0.0f);
  const double tilt = rng.uniform(0.8, 1.6);
  std::size_t pos = static_cast<std::size_t>(c.gap_s.draw(rng) * c.sample_rate);
  while (pos < n) {
    const auto len = static_cast<std::size_t>(c.syllable_s.draw(rng) * c.sample_rate);
    const double lo = c.low_hz.draw(rng);
    const double hi = lo * c.glide_ratio.draw(rng);
    if (label == Label::kBonafide)
      detail::add_syllable(out, pos, len, lo, hi, c, tilt, rng);
    else
      detail::add_syllable(out, pos, len, hi, lo, c, tilt, rng);
    pos += len + static_cast<std::size_t>(c.gap_s.draw(rng) * c.sample_rate);
  }
  for (auto& v : out) v += static_cast<float>(c.noise_floor * rng.normal());
  Waveform w;
  w.sample_rate = c.sample_rate;
  w.samples = std::move(out);
  const double r = rms(w);
  if (r > 0.0)
    for (auto& v : w.samples) v = static_cast<float>(v * (c.target_rms / r));
  return w;
}

/// Balanced labelled set: n_per_class of each class, interleaved in a
/// seeded random order. Ids are `<prefix>_<index>`.
inline std::vector<SynthUtterance> synth_dataset(std::uint64_t seed, std::size_t n_per_class,
                                                 const std::string& prefix = "utt",
                                                 const SynthConfig& c = {}) {
  require(n_per_class >= 1, "synth: need at least one utterance per class", ErrorKind::kUsage);
  Rng order_rng(seed);
  std::vector<Label> labels;
  for (std::size_t i = 0; i < n_per_class; ++i) {
    labels.push_back(Label::kBonafide);
    labels.push_back(Label::kSpoof);
  }
  order_rng.shuffle(labels);
  std::vector<SynthUtterance> out;
  out.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    Rng rng = order_rng.fork(i + 1);
    char id[64];
    std::snprintf(id, sizeof id, "%s_%05zu", prefix.c_str(), i);
    out.push_back({id, labels[i], synth_utterance(labels[i], c, rng)});
  }
  return out;
}

/// Writes `<dir>/wav/<id>.wav`, a manifest `<dir>/<name>.lst`
/// (`<id> wav/<id>.wav <label>`) and a protocol `<dir>/<name>.protocol`.
inline void write_split(const std::filesystem::path& dir, const std::string& name,
                        const std::vector<SynthUtterance>& set) {
  std::filesystem::create_directories(dir / "wav");
  std::ofstream lst(dir / (name + ".lst")), proto(dir / (name + ".protocol"));
  require(bool(lst) && bool(proto), "cannot write manifests under '" + dir.string() + "'");
  for (const auto& u : set) {
    const std::string rel = "wav/" + u.utt_id + ".wav";
    write_wav((dir / rel).string(), u.wave);
    lst << u.utt_id << ' ' << rel << ' ' << to_string(u.label) << '\n';
    proto << u.utt_id << ' ' << to_string(u.label) << '\n';
  }
}

/// The standard desk corpus: n per class for training and ceil(n/2) per
/// class for development, drawn from disjoint streams of the same seed.
inline void write_synth_corpus(const std::filesystem::path& dir, std::uint64_t seed,
                               std::size_t n_per_class, const SynthConfig& c = {}) {
  Rng root(seed);
  const std::uint64_t train_seed = root.next_u64();
  const std::uint64_t dev_seed = root.next_u64();
  write_split(dir, "train", synth_dataset(train_seed, n_per_class, "T", c));
  write_split(dir, "dev", synth_dataset(dev_seed, (n_per_class + 1) / 2, "D", c));
}

}  // namespace xmamba
