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
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "xmamba/param_tree.hpp"

namespace xmamba {

struct AdamOptions {
  double lr = 1e-6;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename P>
struct AdamState {
  P m;
  P v;
  std::size_t step = 0;
  std::size_t skipped = 0;

  AdamState() = default;
  explicit AdamState(const P& params) : m(zeros_like(params)), v(zeros_like(params)) {}
};

/// One Adam update with decoupled weight decay,
///   w <- w - lr * (m_hat / (sqrt(v_hat) + eps) + wd * w).
/// Returns false and leaves params and moments untouched when any gradient
/// is non-finite; the skip is counted in state.skipped.
template <typename P>
bool adam_step(P& params, const P& grads, AdamState<P>& s, const AdamOptions& o) {
  if (!tree_finite(grads)) {
    ++s.skipped;
    return false;
  }
  ++s.step;
  const double c1 = 1.0 - std::pow(o.beta1, double(s.step));
  const double c2 = 1.0 - std::pow(o.beta2, double(s.step));
  zip_values(s.m, grads, [&](auto& m, auto g) {
    m = static_cast<std::remove_reference_t<decltype(m)>>(o.beta1 * m + (1.0 - o.beta1) * g);
  });
  zip_values(s.v, grads, [&](auto& v, auto g) {
    v = static_cast<std::remove_reference_t<decltype(v)>>(o.beta2 * v +
                                                          (1.0 - o.beta2) * double(g) * g);
  });
  std::vector<double> mv = flatten<double>(s.m), vv = flatten<double>(s.v);
  std::size_t i = 0;
  params.for_each_tensor([&](const std::string&, auto& w) {
    using V = typename std::remove_reference_t<decltype(w)>::value_type;
    for (auto& x : w.values()) {
      const double mhat = mv[i] / c1, vhat = vv[i] / c2;
      ++i;
      const double upd = mhat / (std::sqrt(vhat) + o.eps) + o.weight_decay * double(x);
      x = static_cast<V>(double(x) - o.lr * upd);
    }
  });
  return true;
}

template <typename P>
struct ScoredCheckpoint {
  P params;
  double dev_eer = 0.0;
  std::size_t epoch = 0;
};

/// Keeps the k checkpoints with the lowest dev EER. Ties keep the earlier epoch.
template <typename P>
void keep_best(std::vector<ScoredCheckpoint<P>>& pool, ScoredCheckpoint<P> c, std::size_t k) {
  pool.push_back(std::move(c));
  std::stable_sort(pool.begin(), pool.end(), [](const auto& a, const auto& b) {
    return a.dev_eer < b.dev_eer;
  });
  if (pool.size() > k) pool.resize(k);
}

/// Elementwise mean of the k lowest-EER checkpoints. With fewer than k
/// available, all are averaged and *short (if given) is set.
template <typename P>
P average_checkpoints(std::vector<ScoredCheckpoint<P>> cs, std::size_t k, bool* short_pool = nullptr) {
  require(!cs.empty(), "average_checkpoints: no checkpoints");
  require(k >= 1, "average_checkpoints: k must be >= 1", ErrorKind::kUsage);
  if (short_pool != nullptr) *short_pool = cs.size() < k;
  std::stable_sort(cs.begin(), cs.end(),
                   [](const auto& a, const auto& b) { return a.dev_eer < b.dev_eer; });
  const std::size_t n = std::min(k, cs.size());
  // Accumulate in double, then cast, so the average does not depend on the
  // precision of the tree.
  std::vector<double> acc(parameter_count(cs[0].params), 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const auto flat = flatten<double>(cs[j].params);
    require(flat.size() == acc.size(), "average_checkpoints: shape mismatch");
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += flat[i];
  }
  for (auto& a : acc) a /= double(n);
  P out = cs[0].params;
  std::size_t i = 0;
  out.for_each_tensor([&](const std::string&, auto& m) {
    using V = typename std::remove_reference_t<decltype(m)>::value_type;
    for (auto& x : m.values()) x = static_cast<V>(acc[i++]);
  });
  return out;
}

/// Stops after `patience` consecutive epochs without a strict improvement.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience) : patience_(patience) {}

  /// Records one epoch; returns true when training should stop.
  bool update(double dev_eer) {
    if (dev_eer < best_) {
      best_ = dev_eer;
      stale_ = 0;
    } else {
      ++stale_;
    }
    return stale_ >= patience_;
  }

  double best() const noexcept { return best_; }
  std::size_t stale_epochs() const noexcept { return stale_; }

 private:
  std::size_t patience_;
  std::size_t stale_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

}  // namespace xmamba
