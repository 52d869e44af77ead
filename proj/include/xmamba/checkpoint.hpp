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

// Checkpoint file layout (all integers little-endian):
//
//   char[4]  magic "XMCK"
//   u32      format version (kCheckpointVersion)
//   u32      bytes per scalar (4 = float32, 8 = float64)
//   u32      length L of the config text
//   char[L]  model config and the input crop length, as `key=value` lines
//   u64      number of scalars N
//   N * s    parameters, flattened in for_each_tensor order
//   u64      FNV-1a hash of every preceding byte

#pragma once

#include <bit>
#include <cstdint>
#include <iterator>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "xmamba/augment.hpp"
#include "xmamba/model.hpp"
#include "xmamba/param_tree.hpp"

namespace xmamba {

inline constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are copied as little-endian IEEE scalars");

namespace detail {

inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

template <typename U>
void append_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename U>
U take_le(const std::string& in, std::size_t& pos, const std::string& what) {
  require(pos + sizeof(U) <= in.size(), "checkpoint truncated in " + what);
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i)
    v |= static_cast<U>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += sizeof(U);
  return v;
}

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline std::string serialize_model_config(const ModelConfig& c) {
  std::ostringstream o;
  o << "d_feat=" << c.d_feat << '\n'
    << "d_model=" << c.d_model << '\n'
    << "d_inner=" << c.d_inner << '\n'
    << "n_state=" << c.n_state << '\n'
    << "n_blocks=" << c.n_blocks << '\n'
    << "k_conv=" << c.k_conv << '\n'
    << "variant=" << to_string(c.variant) << '\n'
    << "pooling=" << to_string(c.pooling) << '\n'
    << "weight_bonafide=" << detail::format_real(c.weight_bonafide) << '\n'
    << "weight_spoof=" << detail::format_real(c.weight_spoof) << '\n'
    << "seed=" << c.seed << '\n';
  return o.str();
}

inline ModelConfig parse_model_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, "checkpoint config: malformed line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const char* k) {
    const auto it = kv.find(k);
    require(it != kv.end(), std::string("checkpoint config: missing key '") + k + "'");
    return it->second;
  };
  auto num = [&](const char* k) -> std::uint64_t {
    try {
      return std::stoull(get(k));
    } catch (const std::exception&) {
      throw Error(std::string("checkpoint config: bad value for '") + k + "'");
    }
  };
  auto real = [&](const char* k) {
    try {
      return std::stod(get(k));
    } catch (const std::exception&) {
      throw Error(std::string("checkpoint config: bad value for '") + k + "'");
    }
  };
  ModelConfig c;
  c.d_feat = num("d_feat");
  c.d_model = num("d_model");
  c.d_inner = num("d_inner");
  c.n_state = num("n_state");
  c.n_blocks = num("n_blocks");
  c.k_conv = num("k_conv");
  c.variant = parse_variant(get("variant"));
  c.pooling = parse_pooling(get("pooling"));
  c.weight_bonafide = real("weight_bonafide");
  c.weight_spoof = real("weight_spoof");
  c.seed = num("seed");
  c.validate();
  return c;
}

/// `crop_samples` is the waveform crop the model was trained and evaluated
/// with; scoring reuses it.
template <typename T>
std::string encode_checkpoint(const ModelConfig& cfg, const ModelParams<T>& p,
                              std::size_t crop_samples = kDefaultCropSamples) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  std::string out = "XMCK";
  detail::append_le<std::uint32_t>(out, kCheckpointVersion);
  detail::append_le<std::uint32_t>(out, sizeof(T));
  const std::string text =
      serialize_model_config(cfg) + "crop_samples=" + std::to_string(crop_samples) + '\n';
  detail::append_le<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  const std::size_t n = parameter_count(p);
  detail::append_le<std::uint64_t>(out, n);
  const std::size_t at = out.size();
  out.resize(at + n * sizeof(T));
  char* dst = out.data() + at;
  p.for_each_tensor([&](const std::string&, const auto& m) {
    std::memcpy(dst, m.data(), m.size() * sizeof(T));
    dst += m.size() * sizeof(T);
  });
  detail::append_le<std::uint64_t>(out, detail::fnv1a(out));
  return out;
}

template <typename T>
struct Checkpoint {
  ModelConfig config;
  ModelParams<T> params;
  std::size_t crop_samples = kDefaultCropSamples;
};

template <typename T>
Checkpoint<T> decode_checkpoint(const std::string& bytes) {
  std::size_t pos = 0;
  require(bytes.size() >= 4 && bytes.compare(0, 4, "XMCK") == 0, "not an xmamba checkpoint");
  pos = 4;
  const auto version = detail::take_le<std::uint32_t>(bytes, pos, "version");
  require(version == kCheckpointVersion,
          "checkpoint version " + std::to_string(version) + " is not supported (expected " +
              std::to_string(kCheckpointVersion) + ")");
  const auto scalar = detail::take_le<std::uint32_t>(bytes, pos, "scalar size");
  require(scalar == sizeof(T), "checkpoint stores " + std::to_string(scalar) +
                                   "-byte scalars, expected " + std::to_string(sizeof(T)));
  const auto len = detail::take_le<std::uint32_t>(bytes, pos, "config length");
  require(pos + len <= bytes.size(), "checkpoint truncated in config");
  std::string text = bytes.substr(pos, len);
  pos += len;
  const std::string crop_key = "crop_samples=";
  const auto at = text.rfind(crop_key);
  require(at != std::string::npos && (at == 0 || text[at - 1] == '\n'),
          "checkpoint config: missing key 'crop_samples'");
  Checkpoint<T> ck;
  try {
    std::size_t used = 0;
    const std::string v = text.substr(at + crop_key.size());
    ck.crop_samples = std::stoull(v, &used);
    require(used + 1 == v.size() && v.back() == '\n' && ck.crop_samples >= 1, "bad");
  } catch (const std::exception&) {
    throw Error("checkpoint config: bad value for 'crop_samples'");
  }
  text.erase(at);
  ck.config = parse_model_config(text);
  const auto n = detail::take_le<std::uint64_t>(bytes, pos, "parameter count");
  ck.params = ModelParams<T>(ck.config);
  require(n == parameter_count(ck.params), "checkpoint parameter count does not match its config");
  require(pos + n * sizeof(T) + 8 <= bytes.size(), "checkpoint truncated in parameters");
  const char* src = bytes.data() + pos;
  ck.params.for_each_tensor([&](const std::string&, auto& m) {
    std::memcpy(m.data(), src, m.size() * sizeof(T));
    src += m.size() * sizeof(T);
  });
  pos += n * sizeof(T);
  const std::uint64_t expect = detail::fnv1a(bytes.substr(0, pos));
  const auto stored = detail::take_le<std::uint64_t>(bytes, pos, "checksum");
  require(stored == expect, "checkpoint checksum mismatch (file corrupt)");
  require(pos == bytes.size(), "checkpoint has trailing bytes");
  return ck;
}

template <typename T>
void save_params(const std::string& path, const ModelConfig& cfg, const ModelParams<T>& p,
                 std::size_t crop_samples = kDefaultCropSamples) {
  const std::string bytes = encode_checkpoint(cfg, p, crop_samples);
  std::ofstream o(path, std::ios::binary);
  require(bool(o), "cannot write checkpoint '" + path + "'");
  o.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(bool(o), "write failed for '" + path + "'");
}

template <typename T = Real>
Checkpoint<T> load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(bool(in), "cannot open checkpoint '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint<T>(bytes);
  } catch (const Error& e) {
    throw Error(path + ": " + e.what(), e.kind());
  }
}

}  // namespace xmamba
