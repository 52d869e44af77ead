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

// Manifests and per-utterance inputs.
//
// A manifest line is `<utt_id> <path> <bonafide|spoof>` with the path taken
// relative to the manifest's directory. The input kind follows the file
// extension:
//   .wav   16-bit PCM mono, run through the toy front-end
//   .f32   raw little-endian float32 samples, run through the toy front-end
//   .feat  binary features: u32 rows, u32 cols, then rows*cols float32
//   .txt   text features: one frame per line, whitespace-separated

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "xmamba/audio.hpp"
#include "xmamba/tensor.hpp"
#include "xmamba/types.hpp"

namespace xmamba {

struct ManifestEntry {
  std::string utt_id;
  std::filesystem::path path;
  std::optional<Label> label;
};

/// Reads a manifest. The label column may be omitted for scoring-only lists.
inline std::vector<ManifestEntry> read_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  require(bool(in), "cannot open manifest '" + manifest_path + "'");
  const auto base = std::filesystem::path(manifest_path).parent_path();
  std::vector<ManifestEntry> out;
  std::set<std::string> seen;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    std::istringstream ss(line);
    std::vector<std::string> tok;
    for (std::string t; ss >> t;) tok.push_back(t);
    if (tok.empty() || tok[0][0] == '#') continue;
    const std::string where = manifest_path + ":" + std::to_string(n);
    require(tok.size() == 2 || tok.size() == 3, where + ": expected '<utt_id> <path> [label]'");
    require(seen.insert(tok[0]).second, where + ": duplicate utt_id '" + tok[0] + "'");
    ManifestEntry e{tok[0], base / tok[1], std::nullopt};
    if (tok.size() == 3) {
      try {
        e.label = parse_label(tok[2]);
      } catch (const Error& err) {
        throw Error(where + ": " + err.what());
      }
    }
    out.push_back(std::move(e));
  }
  return out;
}

enum class InputKind { kWave, kFeatures };

inline InputKind input_kind(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".wav" || ext == ".f32") return InputKind::kWave;
  if (ext == ".feat" || ext == ".txt") return InputKind::kFeatures;
  throw Error("unsupported input extension '" + ext + "' for " + p.string());
}

inline Waveform read_waveform(const std::filesystem::path& p) {
  return p.extension() == ".wav" ? read_wav(p.string()) : read_raw_float(p.string());
}

inline void write_features_binary(const std::string& path, const Matrix<float>& f) {
  std::ofstream o(path, std::ios::binary);
  require(bool(o), "cannot write '" + path + "'");
  const std::uint32_t dims[2] = {static_cast<std::uint32_t>(f.rows()),
                                 static_cast<std::uint32_t>(f.cols())};
  o.write(reinterpret_cast<const char*>(dims), sizeof dims);
  o.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * 4));
  require(bool(o), "write failed for '" + path + "'");
}

inline Matrix<float> read_features_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(bool(in), "cannot open '" + path + "'");
  std::uint32_t dims[2] = {0, 0};
  in.read(reinterpret_cast<char*>(dims), sizeof dims);
  require(in.gcount() == sizeof dims, "feature file '" + path + "': truncated header");
  Matrix<float> f(dims[0], dims[1]);
  in.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(f.size() * 4));
  require(static_cast<std::size_t>(in.gcount()) == f.size() * 4,
          "feature file '" + path + "': truncated payload");
  return f;
}

inline void write_features_text(const std::string& path, const Matrix<float>& f) {
  std::ofstream o(path);
  require(bool(o), "cannot write '" + path + "'");
  o.precision(9);
  for (std::size_t t = 0; t < f.rows(); ++t) {
    for (std::size_t i = 0; i < f.cols(); ++i) o << (i ? " " : "") << f(t, i);
    o << '\n';
  }
}

inline Matrix<float> read_features_text(const std::string& path) {
  std::ifstream in(path);
  require(bool(in), "cannot open '" + path + "'");
  std::vector<float> data;
  std::size_t rows = 0, cols = 0;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    std::istringstream ss(line);
    std::size_t c = 0;
    for (std::string tok; ss >> tok; ++c) {
      std::size_t used = 0;
      float v = 0.0f;
      try {
        v = std::stof(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      require(used == tok.size(), path + ":" + std::to_string(n) + ": bad number '" + tok + "'");
      data.push_back(v);
    }
    if (c == 0) continue;
    require(cols == 0 || c == cols, path + ":" + std::to_string(n) + ": ragged row");
    cols = c;
    ++rows;
  }
  return Matrix<float>(rows, cols, std::move(data));
}

inline Matrix<float> read_features(const std::filesystem::path& p) {
  return p.extension() == ".feat" ? read_features_binary(p.string())
                                  : read_features_text(p.string());
}

}  // namespace xmamba
