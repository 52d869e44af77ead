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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "xmamba/tensor.hpp"

namespace xmamba {

struct Waveform {
  std::vector<float> samples;
  int sample_rate = 16000;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  double duration_s() const { return double(samples.size()) / double(sample_rate); }
};

inline double energy(std::span<const float> x) {
  double e = 0.0;
  for (float v : x) e += double(v) * double(v);
  return e;
}

inline double rms(const Waveform& w) {
  return w.empty() ? 0.0 : std::sqrt(energy(w.samples) / double(w.size()));
}

/// 10 log10(signal energy / noise energy), +inf for silent noise.
inline double snr_db(std::span<const float> signal, std::span<const float> noise) {
  const double en = energy(noise);
  if (en == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(energy(signal) / en);
}

namespace detail {

inline void put_u32(std::ostream& o, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  o.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u16(std::ostream& o, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  o.write(reinterpret_cast<const char*>(b), 2);
}

inline std::uint32_t le32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}

inline std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

}  // namespace detail

/// Writes 16-bit PCM mono. Samples are clipped to [-1, 1].
inline void write_wav(const std::string& path, const Waveform& w) {
  std::ofstream o(path, std::ios::binary);
  require(bool(o), "cannot write '" + path + "'");
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(w.size() * 2);
  o.write("RIFF", 4);
  detail::put_u32(o, 36 + data_bytes);
  o.write("WAVEfmt ", 8);
  detail::put_u32(o, 16);
  detail::put_u16(o, 1);  // PCM
  detail::put_u16(o, 1);  // mono
  detail::put_u32(o, static_cast<std::uint32_t>(w.sample_rate));
  detail::put_u32(o, static_cast<std::uint32_t>(w.sample_rate * 2));
  detail::put_u16(o, 2);
  detail::put_u16(o, 16);
  o.write("data", 4);
  detail::put_u32(o, data_bytes);
  for (float s : w.samples) {
    const float c = std::clamp(s, -1.0f, 1.0f);
    const auto q = static_cast<std::int16_t>(std::lrint(c * 32767.0f));
    detail::put_u16(o, static_cast<std::uint16_t>(q));
  }
  require(bool(o), "write failed for '" + path + "'");
}

/// Reads 16-bit PCM mono WAV. Unknown chunks are skipped.
inline Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(bool(in), "cannot open '" + path + "'");
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  const std::string where = "wav '" + path + "': ";
  require(buf.size() >= 12 && std::memcmp(buf.data(), "RIFF", 4) == 0 &&
              std::memcmp(buf.data() + 8, "WAVE", 4) == 0,
          where + "not a RIFF/WAVE file");
  Waveform w;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const unsigned char* h = buf.data() + pos;
    const std::uint32_t len = detail::le32(h + 4);
    const std::size_t body = pos + 8;
    require(body + len <= buf.size(), where + "truncated chunk");
    if (std::memcmp(h, "fmt ", 4) == 0) {
      require(len >= 16, where + "short fmt chunk");
      const unsigned char* f = buf.data() + body;
      require(detail::le16(f) == 1, where + "only PCM is supported");
      require(detail::le16(f + 2) == 1, where + "only mono is supported");
      require(detail::le16(f + 14) == 16, where + "only 16-bit samples are supported");
      w.sample_rate = static_cast<int>(detail::le32(f + 4));
      have_fmt = true;
    } else if (std::memcmp(h, "data", 4) == 0) {
      require(have_fmt, where + "data before fmt");
      const std::size_t n = len / 2;
      w.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto v = static_cast<std::int16_t>(detail::le16(buf.data() + body + 2 * i));
        w.samples[i] = float(v) / 32768.0f;
      }
      return w;
    }
    pos = body + len + (len & 1);
  }
  throw Error(where + "no data chunk");
}

/// Raw little-endian float32 samples, no header.
inline Waveform read_raw_float(const std::string& path, int sample_rate = 16000) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  require(bool(in), "cannot open '" + path + "'");
  const auto bytes = static_cast<std::size_t>(in.tellg());
  require(bytes % 4 == 0, "raw float file '" + path + "' has a partial sample");
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(bytes / 4);
  in.seekg(0);
  in.read(reinterpret_cast<char*>(w.samples.data()), static_cast<std::streamsize>(bytes));
  return w;
}

}  // namespace xmamba
