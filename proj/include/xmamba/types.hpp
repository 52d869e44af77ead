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

#include <string>
#include <string_view>

#include "xmamba/tensor.hpp"

namespace xmamba {

/// Default compute type.
using Real = float;

/// Class index doubles as the logit index: bonafide first.
enum class Label { kBonafide = 0, kSpoof = 1 };

inline std::string_view to_string(Label l) {
  return l == Label::kBonafide ? "bonafide" : "spoof";
}

inline Label parse_label(std::string_view s) {
  if (s == "bonafide") return Label::kBonafide;
  if (s == "spoof") return Label::kSpoof;
  throw Error("unknown label '" + std::string(s) + "' (expected bonafide|spoof)");
}

}  // namespace xmamba
