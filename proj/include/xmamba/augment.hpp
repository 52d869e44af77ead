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

// RawBoost-style waveform augmentation and length normalization.
//
// Three noise families are provided:
//   convolutive  y = h * x + sum_{p=2..P} g_p (h * x)^p, with h a random
//                multi-band FIR (delta plus gain-weighted band-passes);
//   impulsive    y[n] = x[n] + c f_n x[n] on a random subset of samples,
//                with c chosen to hit a drawn SNR;
//   stationary   y = x + c (h * white), with c chosen to hit a drawn SNR.
// The numeric ranges are approximations of the published RawBoost setup and
// are all overridable through AugmentConfig.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "xmamba/audio.hpp"
#include "xmamba/random.hpp"

namespace xmamba {

enum class AugmentMode { kNone, kLa, kDf };

inline std::string_view to_string(AugmentMode m) {
  switch (m) {
    case AugmentMode::kLa: return "la";
    case AugmentMode::kDf: return "df";
    default: return "none";
  }
}

inline AugmentMode parse_augment_mode(std::string_view s) {
  if (s == "none") return AugmentMode::kNone;
  if (s == "la") return AugmentMode::kLa;
  if (s == "df") return AugmentMode::kDf;
  throw Error("unknown augmentation mode '" + std::string(s) + "' (expected la|df|none)",
              ErrorKind::kUsage);
}

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  double draw(Rng& rng) const { return lo == hi ? lo : rng.uniform(lo, hi); }
  bool valid() const { return lo <= hi; }
};

/// Random multi-band FIR description shared by the convolutive and
/// stationary families.
struct BandFilterConfig {
  int min_bands = 1;
  int max_bands = 5;
  Range center_hz{20.0, 8000.0};
  Range bandwidth_hz{100.0, 1000.0};
  int min_taps = 11;  // rounded up to odd
  int max_taps = 101;
  Range band_gain{0.0, 1.0};
};

struct AugmentConfig {
  AugmentMode mode = AugmentMode::kNone;

  BandFilterConfig conv_filter;
  bool conv_keep_direct = true;  // include the delta tap
  int nonlinear_order = 3;       // highest power P
  Range nonlinear_gain{0.0, 0.3};

  Range impulse_density{0.01, 0.10};  // fraction of samples hit
  Range impulse_snr_db{10.0, 30.0};

  BandFilterConfig color_filter;
  Range stationary_snr_db{10.0, 40.0};

  void validate() const {
    for (const Range* r : {&conv_filter.center_hz, &conv_filter.bandwidth_hz,
                           &conv_filter.band_gain, &nonlinear_gain, &impulse_density,
                           &impulse_snr_db, &color_filter.center_hz,
                           &color_filter.bandwidth_hz, &color_filter.band_gain,
                           &stationary_snr_db})
      require(r->valid(), "augment: empty parameter range", ErrorKind::kUsage);
    require(impulse_density.lo >= 0.0 && impulse_density.hi <= 1.0,
            "augment: impulse density must lie in [0,1]", ErrorKind::kUsage);
    for (const BandFilterConfig* f : {&conv_filter, &color_filter})
      require(f->min_bands >= 0 && f->min_bands <= f->max_bands && f->min_taps >= 1 &&
                  f->min_taps <= f->max_taps,
              "augment: bad filter configuration", ErrorKind::kUsage);
    require(nonlinear_order >= 1, "augment: nonlinear order must be >= 1", ErrorKind::kUsage);
  }
};

/// Hamming-windowed sinc band-pass between f1 and f2 (Hz), odd length,
/// centred at tap (taps - 1) / 2.
inline std::vector<double> bandpass_fir(double f1, double f2, int taps, int sample_rate) {
  require(taps % 2 == 1, "bandpass_fir: tap count must be odd");
  const double nyq = 0.5 * sample_rate;
  const double a = std::clamp(f1, 0.0, nyq) / sample_rate;
  const double b = std::clamp(f2, 0.0, nyq) / sample_rate;
  const int m = (taps - 1) / 2;
  auto lowpass = [](double fc, int k) {
    return k == 0 ? 2.0 * fc : std::sin(2.0 * std::numbers::pi * fc * k) / (std::numbers::pi * k);
  };
  std::vector<double> h(taps);
  for (int n = 0; n < taps; ++n) {
    const int k = n - m;
    const double w = taps == 1 ? 1.0 : 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / (taps - 1));
    h[n] = (lowpass(b, k) - lowpass(a, k)) * w;
  }
  return h;
}

/// Draws a random multi-band filter. With `direct`, a unit centre tap is
/// added so the filter boosts bands on top of the original signal.
inline std::vector<double> random_band_filter(const BandFilterConfig& c, bool direct,
                                              int sample_rate, Rng& rng) {
  const int bands = static_cast<int>(rng.uniform_int(c.min_bands, c.max_bands));
  int taps = static_cast<int>(rng.uniform_int(c.min_taps, c.max_taps));
  if (taps % 2 == 0) ++taps;
  std::vector<double> h(taps, 0.0);
  if (direct) h[(taps - 1) / 2] = 1.0;
  for (int b = 0; b < bands; ++b) {
    const double fc = c.center_hz.draw(rng);
    const double bw = c.bandwidth_hz.draw(rng);
    const double g = c.band_gain.draw(rng);
    const auto bp = bandpass_fir(std::max(0.0, fc - bw / 2), fc + bw / 2, taps, sample_rate);
    for (int i = 0; i < taps; ++i) h[i] += g * bp[i];
  }
  return h;
}

/// Zero-phase ("same") FIR filtering: output sample n is centred on input n.
inline std::vector<double> fir_same(std::span<const double> x, std::span<const double> h) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
  const std::ptrdiff_t taps = static_cast<std::ptrdiff_t>(h.size());
  const std::ptrdiff_t m = (taps - 1) / 2;
  std::vector<double> y(x.size(), 0.0);
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::ptrdiff_t k = 0; k < taps; ++k) {
      const std::ptrdiff_t j = i + m - k;
      if (j >= 0 && j < n) acc += h[k] * x[j];
    }
    y[i] = acc;
  }
  return y;
}

namespace detail {

inline std::vector<double> to_double(const Waveform& w) {
  return {w.samples.begin(), w.samples.end()};
}

inline Waveform from_double(const std::vector<double>& y, int sample_rate) {
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.assign(y.begin(), y.end());
  return w;
}

inline double peak(std::span<const double> x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace detail

/// Linear and non-linear convolutive noise. The result is rescaled to the
/// input peak so augmentation never changes the level.
inline Waveform convolutive_noise(const Waveform& w, const AugmentConfig& c, Rng& rng) {
  require(!w.empty(), "convolutive_noise: empty waveform");
  const auto x = detail::to_double(w);
  const auto h = random_band_filter(c.conv_filter, c.conv_keep_direct, w.sample_rate, rng);
  const auto f = fir_same(x, h);
  std::vector<double> y = f;
  for (int p = 2; p <= c.nonlinear_order; ++p) {
    const double g = c.nonlinear_gain.draw(rng);
    if (g == 0.0) continue;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += g * std::pow(f[i], p);
  }
  const double py = detail::peak(y);
  if (py > 0.0) {
    const double s = detail::peak(x) / py;
    if (s != 1.0)
      for (auto& v : y) v *= s;
  }
  return detail::from_double(y, w.sample_rate);
}

/// Signal-dependent impulses on a random fraction of samples. Each impulse
/// is c * f_n * x[n] with f_n = (2u - 1)(2v - 1); c is set so that the
/// impulse energy sits at a drawn SNR below the signal.
inline Waveform impulsive_noise(const Waveform& w, const AugmentConfig& c, Rng& rng) {
  require(!w.empty(), "impulsive_noise: empty waveform");
  const double density = c.impulse_density.draw(rng);
  const double target_db = c.impulse_snr_db.draw(rng);
  const std::size_t hits =
      std::min(w.size(), static_cast<std::size_t>(std::llround(density * double(w.size()))));
  if (hits == 0) return w;
  std::vector<std::size_t> pos(w.size());
  for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = i;
  // Partial Fisher-Yates for a uniform subset.
  for (std::size_t i = 0; i < hits; ++i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(std::int64_t(i), std::int64_t(pos.size() - 1)));
    std::swap(pos[i], pos[j]);
  }
  std::vector<double> r(w.size(), 0.0);
  for (std::size_t i = 0; i < hits; ++i) {
    const std::size_t n = pos[i];
    const double f = (2.0 * rng.uniform() - 1.0) * (2.0 * rng.uniform() - 1.0);
    r[n] = f * double(w.samples[n]);
  }
  double er = 0.0;
  for (double v : r) er += v * v;
  if (er == 0.0) return w;
  const double scale = std::sqrt(energy(w.samples) / (er * std::pow(10.0, target_db / 10.0)));
  Waveform out = w;
  for (std::size_t i = 0; i < hits; ++i) {
    const std::size_t n = pos[i];
    out.samples[n] = static_cast<float>(double(w.samples[n]) + scale * r[n]);
  }
  return out;
}

/// Adds coloured Gaussian noise at exactly `snr` dB (computed on the float
/// noise that is added). An infinite SNR returns the input unchanged.
inline Waveform add_colored_noise(const Waveform& w, double snr, const BandFilterConfig& color,
                                  Rng& rng) {
  require(!w.empty(), "stationary_colored_noise: empty waveform");
  if (std::isinf(snr) && snr > 0) return w;
  const auto h = random_band_filter(color, false, w.sample_rate, rng);
  std::vector<double> white(w.size());
  for (auto& v : white) v = rng.normal();
  auto n = fir_same(white, h);
  double en = 0.0;
  for (double v : n) en += v * v;
  if (en == 0.0) {  // zero-band draw: fall back to white noise
    n = white;
    for (double v : n) en += v * v;
  }
  const double es = energy(w.samples);
  const double scale = std::sqrt(es / (en * std::pow(10.0, snr / 10.0)));
  Waveform out = w;
  for (std::size_t i = 0; i < w.size(); ++i)
    out.samples[i] = static_cast<float>(double(w.samples[i]) + scale * n[i]);
  return out;
}

inline Waveform stationary_colored_noise(const Waveform& w, const AugmentConfig& c, Rng& rng) {
  return add_colored_noise(w, c.stationary_snr_db.draw(rng), c.color_filter, rng);
}

/// Applies the mode's noise chain: la = convolutive then impulsive,
/// df = stationary coloured noise, none = identity.
inline Waveform augment(const Waveform& w, const AugmentConfig& c, Rng& rng) {
  switch (c.mode) {
    case AugmentMode::kLa: return impulsive_noise(convolutive_noise(w, c, rng), c, rng);
    case AugmentMode::kDf: return stationary_colored_noise(w, c, rng);
    default: return w;
  }
}

inline constexpr std::size_t kDefaultCropSamples = 64600;

/// Length normalization. Longer inputs are cropped to exactly `target`
/// samples at a random offset when `rng` is given (training) or from the
/// start otherwise (evaluation). Shorter inputs are tiled until at least
/// `target` long and the leading `target` samples are kept.
inline Waveform crop_or_concat(const Waveform& w, std::size_t target = kDefaultCropSamples,
                               Rng* rng = nullptr) {
  require(!w.empty(), "crop_or_concat: empty waveform");
  require(target >= 1, "crop_or_concat: target length must be >= 1", ErrorKind::kUsage);
  Waveform out;
  out.sample_rate = w.sample_rate;
  if (w.size() >= target) {
    std::size_t off = 0;
    if (rng != nullptr && w.size() > target)
      off = static_cast<std::size_t>(rng->uniform_int(0, std::int64_t(w.size() - target)));
    out.samples.assign(w.samples.begin() + off, w.samples.begin() + off + target);
    return out;
  }
  out.samples.reserve(target);
  while (out.samples.size() < target) {
    const std::size_t take = std::min(w.size(), target - out.samples.size());
    out.samples.insert(out.samples.end(), w.samples.begin(), w.samples.begin() + take);
  }
  return out;
}

}  // namespace xmamba
