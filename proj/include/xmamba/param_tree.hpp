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

// Generic operations over parameter trees. A parameter tree is any type with
//   template <class F> void for_each_tensor(F&& f) [const];
// that calls f(name, Matrix<T>&) for every tensor in a fixed declared order.
// Gradients reuse the parameter type itself.

#pragma once

#include <concepts>
#include <type_traits>
#include <cstddef>
#include <string>
#include <vector>

#include "xmamba/tensor.hpp"

namespace xmamba {

template <typename F>
auto prefixed(const std::string& prefix, F& f) {
  return [&f, prefix](const std::string& name, auto& m) { f(prefix + name, m); };
}

template <typename P>
P zeros_like(const P& p) {
  P out = p;
  out.for_each_tensor([](const std::string&, auto& m) { m.fill(0); });
  return out;
}

template <typename P>
std::size_t parameter_count(const P& p) {
  std::size_t n = 0;
  p.for_each_tensor([&](const std::string&, const auto& m) { n += m.size(); });
  return n;
}

template <typename T, typename P>
std::vector<T> flatten(const P& p) {
  std::vector<T> out;
  out.reserve(parameter_count(p));
  p.for_each_tensor([&](const std::string&, const auto& m) {
    out.insert(out.end(), m.values().begin(), m.values().end());
  });
  return out;
}

template <typename T, typename P>
void unflatten(std::span<const T> flat, P& p) {
  require(flat.size() == parameter_count(p), "unflatten: size mismatch");
  std::size_t off = 0;
  p.for_each_tensor([&](const std::string&, auto& m) {
    std::copy_n(flat.begin() + off, m.size(), m.data());
    off += m.size();
  });
}

/// Calls f(dst_value&, src_value) for every scalar pair of two same-shaped trees.
template <typename P, typename F>
void zip_values(P& dst, const P& src, F&& f) {
  std::vector<const void*> srcs;
  std::vector<std::size_t> sizes;
  src.for_each_tensor([&](const std::string&, const auto& m) {
    srcs.push_back(m.data());
    sizes.push_back(m.size());
  });
  std::size_t k = 0;
  dst.for_each_tensor([&](const std::string& name, auto& m) {
    using V = typename std::remove_reference_t<decltype(m)>::value_type;
    require(k < srcs.size() && sizes[k] == m.size(),
            "parameter trees differ at " + name);
    const V* s = static_cast<const V*>(srcs[k++]);
    V* d = m.data();
    for (std::size_t i = 0; i < m.size(); ++i) f(d[i], s[i]);
  });
}

template <typename P>
void add_tree(P& dst, const P& src) {
  zip_values(dst, src, [](auto& d, auto s) { d += s; });
}

template <typename P, typename S>
void scale_tree(P& p, S factor) {
  p.for_each_tensor([&](const std::string&, auto& m) {
    for (auto& v : m.values()) v *= factor;
  });
}

template <typename P>
bool tree_finite(const P& p) {
  bool ok = true;
  p.for_each_tensor(
      [&](const std::string&, const auto& m) { ok = ok && all_finite(m); });
  return ok;
}

}  // namespace xmamba
