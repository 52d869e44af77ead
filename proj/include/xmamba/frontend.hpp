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

// A frozen, deterministic stand-in for a pretrained speech encoder:
// 25 ms Hann frames every 20 ms, 512-point power spectrum, 40 triangular mel
// filters, log energies, then a fixed seeded Gaussian projection to 1024
// dimensions. Nothing here is trained.

#pragma once

#include <fftw3.h>

#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>
#include <vector>

#include "xmamba/audio.hpp"
#include "xmamba/random.hpp"
#include "xmamba/tensor.hpp"

namespace xmamba {

struct FrontendConfig {
  std::size_t window = 400;  // 25 ms at 16 kHz
  std::size_t hop = 320;     // 20 ms
  std::size_t fft_size = 512;
  std::size_t n_mels = 40;
  std::size_t out_dim = 1024;
  double floor = 1e-8;
  std::uint64_t projection_seed = 0x584d4642;  // "XMFB"
  int sample_rate = 16000;
};

/// Frames produced for `samples` input samples: floor((n - window) / hop) + 1.
inline std::size_t frame_count(std::size_t samples, const FrontendConfig& c = {}) {
  return samples < c.window ? 0 : (samples - c.window) / c.hop + 1;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Triangular mel filters over [0, sr/2]; row m holds weights for FFT bins
/// 0 .. fft_size/2.
inline Matrix<double> mel_filterbank(const FrontendConfig& c) {
  const std::size_t bins = c.fft_size / 2 + 1;
  Matrix<double> fb(c.n_mels, bins);
  const double lo = hz_to_mel(0.0), hi = hz_to_mel(0.5 * c.sample_rate);
  std::vector<double> edges(c.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(lo + (hi - lo) * double(i) / double(c.n_mels + 1));
  for (std::size_t m = 0; m < c.n_mels; ++m) {
    const double l = edges[m], ctr = edges[m + 1], r = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = double(k) * c.sample_rate / double(c.fft_size);
      if (f > l && f < r) fb(m, k) = f <= ctr ? (f - l) / (ctr - l) : (r - f) / (r - ctr);
    }
  }
  return fb;
}

class ToyFrontend {
 public:
  explicit ToyFrontend(FrontendConfig c = {})
      : c_(c),
        window_(c.window),
        mel_(mel_filterbank(c)),
        proj_(c.n_mels, c.out_dim),
        in_(static_cast<double*>(fftw_malloc(sizeof(double) * c.fft_size)), fftw_free),
        out_(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (c.fft_size / 2 + 1))),
             fftw_free) {
    require(c.window >= 1 && c.hop >= 1 && c.window <= c.fft_size,
            "frontend: window must fit inside the FFT", ErrorKind::kUsage);
    for (std::size_t n = 0; n < c.window; ++n)
      window_[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * double(n) / double(c.window));
    Rng rng(c.projection_seed);
    const double s = 1.0 / std::sqrt(double(c.n_mels));
    for (auto& v : proj_.values()) v = s * rng.normal();
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(c.fft_size), in_.get(), out_.get(),
                                 FFTW_ESTIMATE);
    require(plan_ != nullptr, "frontend: FFTW planning failed", ErrorKind::kNumerical);
  }
  ~ToyFrontend() {
    if (plan_ != nullptr) fftw_destroy_plan(plan_);
  }
  ToyFrontend(const ToyFrontend&) = delete;
  ToyFrontend& operator=(const ToyFrontend&) = delete;

  const FrontendConfig& config() const noexcept { return c_; }

  /// Log mel energies [T x n_mels].
  Matrix<double> log_mel(const Waveform& w) const {
    require(w.sample_rate == c_.sample_rate, "frontend: sample rate mismatch");
    const std::size_t T = frame_count(w.size(), c_);
    require(T >= 1, "frontend: input shorter than one frame (" + std::to_string(w.size()) +
                        " < " + std::to_string(c_.window) + " samples)");
    const std::size_t bins = c_.fft_size / 2 + 1;
    Matrix<double> out(T, c_.n_mels);
    std::vector<double> power(bins);
    for (std::size_t t = 0; t < T; ++t) {
      const float* x = w.samples.data() + t * c_.hop;
      for (std::size_t n = 0; n < c_.fft_size; ++n)
        in_.get()[n] = n < c_.window ? window_[n] * double(x[n]) : 0.0;
      fftw_execute(plan_);
      for (std::size_t k = 0; k < bins; ++k) {
        const double re = out_.get()[k][0], im = out_.get()[k][1];
        power[k] = re * re + im * im;
      }
      for (std::size_t m = 0; m < c_.n_mels; ++m) {
        double e = 0.0;
        for (std::size_t k = 0; k < bins; ++k) e += mel_(m, k) * power[k];
        out(t, m) = std::log(e + c_.floor);
      }
    }
    return out;
  }

  /// Features [T x out_dim].
  template <typename T = float>
  Matrix<T> operator()(const Waveform& w) const {
    const Matrix<double> lm = log_mel(w);
    const Matrix<double> f = matmul(lm, proj_);
    return f.template cast<T>();
  }

 private:
  FrontendConfig c_;
  std::vector<double> window_;
  Matrix<double> mel_;
  Matrix<double> proj_;
  std::unique_ptr<double, decltype(&fftw_free)> in_;
  std::unique_ptr<fftw_complex, decltype(&fftw_free)> out_;
  fftw_plan plan_ = nullptr;
};

}  // namespace xmamba
