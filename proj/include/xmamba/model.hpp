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

// Detector: [T x d_feat] features -> affine projection to d_model ->
// bidirectional trunk -> pooling over time -> affine head -> 2 logits
// (bonafide, spoof). Detection score is logit_bonafide - logit_spoof.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>

#include "xmamba/bimamba.hpp"
#include "xmamba/param_tree.hpp"
#include "xmamba/random.hpp"
#include "xmamba/types.hpp"

namespace xmamba {

enum class Pooling { kMean, kMax };

inline std::string_view to_string(Pooling p) { return p == Pooling::kMean ? "mean" : "max"; }

inline Pooling parse_pooling(std::string_view s) {
  if (s == "mean") return Pooling::kMean;
  if (s == "max") return Pooling::kMax;
  throw Error("unknown pooling '" + std::string(s) + "'", ErrorKind::kUsage);
}

struct ModelConfig {
  std::size_t d_feat = 1024;
  std::size_t d_model = 144;
  std::size_t d_inner = 256;
  std::size_t n_state = 16;
  std::size_t n_blocks = 12;
  std::size_t k_conv = 3;
  Variant variant = Variant::kDua;
  Pooling pooling = Pooling::kMean;
  // Non-positive weights mean "inverse class frequency of the training set".
  double weight_bonafide = 0.0;
  double weight_spoof = 0.0;
  std::uint64_t seed = 0;

  BlockShape block_shape() const { return {d_model, d_inner, n_state, k_conv}; }

  void validate() const {
    require(d_feat >= 1 && d_model >= 1 && d_inner >= 1 && n_state >= 1 &&
                n_blocks >= 1 && k_conv >= 1,
            "model config: all dimensions must be >= 1", ErrorKind::kUsage);
  }

  /// Desk-scale configuration used by tests and the acceptance suite.
  static ModelConfig tiny() {
    ModelConfig c;
    c.d_model = 16;
    c.d_inner = 32;
    c.n_state = 16;
    c.n_blocks = 2;
    return c;
  }

  bool operator==(const ModelConfig&) const = default;
};

template <typename T>
struct ModelParams {
  Matrix<T> proj_w;  // [d_feat x d_model]
  Matrix<T> proj_b;  // [1 x d_model]
  TrunkParams<T> trunk;
  Matrix<T> head_w;  // [trunk_width x 2]
  Matrix<T> head_b;  // [1 x 2]

  ModelParams() = default;
  explicit ModelParams(const ModelConfig& c)
      : proj_w(c.d_feat, c.d_model),
        proj_b(1, c.d_model),
        trunk(c.variant, c.n_blocks, c.block_shape()),
        head_w(c.variant == Variant::kDua ? 2 * c.d_model : c.d_model, 2),
        head_b(1, 2) {}

  std::size_t d_model() const noexcept { return proj_w.cols(); }

  template <typename F>
  void for_each_tensor(F&& f) {
    f("proj.w", proj_w);
    f("proj.b", proj_b);
    trunk.for_each_tensor(prefixed("trunk.", f));
    f("head.w", head_w);
    f("head.b", head_b);
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    f("proj.w", proj_w);
    f("proj.b", proj_b);
    trunk.for_each_tensor(prefixed("trunk.", f));
    f("head.w", head_w);
    f("head.b", head_b);
  }
};

template <typename T>
ModelParams<T> init_params(const ModelConfig& c) {
  c.validate();
  ModelParams<T> p(c);
  Rng rng(c.seed);
  fill_uniform(p.proj_w, rng, 1.0 / std::sqrt(double(c.d_feat)));
  fill_uniform(p.proj_b, rng, 1.0 / std::sqrt(double(c.d_feat)));
  p.trunk.initialize(rng);
  const double hb = 1.0 / std::sqrt(double(p.head_w.rows()));
  fill_uniform(p.head_w, rng, hb);
  fill_uniform(p.head_b, rng, hb);
  return p;
}

/// Affine map per frame: [T x d_feat] -> [T x d_model].
template <typename T>
Matrix<T> project_features(const Matrix<T>& x, const ModelParams<T>& p) {
  require(x.cols() == p.proj_w.rows(),
          "features have width " + std::to_string(x.cols()) + ", model expects " +
              std::to_string(p.proj_w.rows()));
  return matmul(x, p.proj_w, &p.proj_b);
}

template <typename T>
Matrix<T> mean_pool(const Matrix<T>& h) {
  require(h.rows() >= 1, "pooling: empty sequence");
  Matrix<T> out(1, h.cols());
  for (std::size_t t = 0; t < h.rows(); ++t)
    for (std::size_t i = 0; i < h.cols(); ++i) out(0, i) += h(t, i);
  for (auto& v : out.values()) v /= T(h.rows());
  return out;
}

template <typename T>
Matrix<T> pool(const Matrix<T>& h, Pooling rule, std::vector<std::size_t>* argmax = nullptr) {
  if (rule == Pooling::kMean) return mean_pool(h);
  require(h.rows() >= 1, "pooling: empty sequence");
  Matrix<T> out(1, h.cols());
  std::vector<std::size_t> idx(h.cols(), 0);
  for (std::size_t i = 0; i < h.cols(); ++i) {
    out(0, i) = h(0, i);
    for (std::size_t t = 1; t < h.rows(); ++t)
      if (h(t, i) > out(0, i)) {
        out(0, i) = h(t, i);
        idx[i] = t;
      }
  }
  if (argmax != nullptr) *argmax = std::move(idx);
  return out;
}

template <typename T>
struct Logits {
  T bonafide = T(0);
  T spoof = T(0);
  T score() const { return bonafide - spoof; }
  T operator[](Label l) const { return l == Label::kBonafide ? bonafide : spoof; }
};

template <typename T>
struct ModelCache {
  Matrix<T> input;
  Matrix<T> projected;
  TrunkCache<T> trunk;
  std::size_t frames = 0;
  std::vector<std::size_t> argmax;
  Matrix<T> pooled;
};

template <typename T>
Logits<T> predict(const Matrix<T>& x, const ModelParams<T>& p, Pooling rule = Pooling::kMean,
                  std::type_identity_t<ModelCache<T>>* cache = nullptr,
                  ScanAlgorithm algo = ScanAlgorithm::kSequential) {
  require(x.rows() >= 1, "predict: empty sequence");
  Matrix<T> x0 = project_features(x, p);
  const Matrix<T> h = stack_forward(x0, p.trunk, cache ? &cache->trunk : nullptr, algo);
  Matrix<T> pooled = pool(h, rule, cache ? &cache->argmax : nullptr);
  const Matrix<T> logits = matmul(pooled, p.head_w, &p.head_b);
  if (cache != nullptr) {
    cache->input = x;
    cache->projected = std::move(x0);
    cache->frames = h.rows();
    cache->pooled = std::move(pooled);
  }
  return {logits(0, 0), logits(0, 1)};
}

template <typename T>
T detection_score(const Matrix<T>& x, const ModelParams<T>& p, Pooling rule = Pooling::kMean) {
  return predict(x, p, rule).score();
}

struct ClassWeights {
  double bonafide = 1.0;
  double spoof = 1.0;
  double operator[](Label l) const { return l == Label::kBonafide ? bonafide : spoof; }
};

/// Inverse class frequency, normalized so a balanced set gets weights 1.
inline ClassWeights inverse_frequency_weights(std::size_t n_bonafide, std::size_t n_spoof) {
  require(n_bonafide > 0 && n_spoof > 0, "class weights: both classes must be present");
  const double n = double(n_bonafide + n_spoof);
  return {n / (2.0 * double(n_bonafide)), n / (2.0 * double(n_spoof))};
}

template <typename T>
struct LossResult {
  T loss;
  Logits<T> grad;  // d loss / d logits
};

/// -w_label * log softmax(logits)[label]
template <typename T>
LossResult<T> weighted_ce_loss(const Logits<T>& z, Label label, const ClassWeights& w) {
  const T m = std::max(z.bonafide, z.spoof);
  const T lse = m + std::log(std::exp(z.bonafide - m) + std::exp(z.spoof - m));
  const T wl = static_cast<T>(w[label]);
  const T p_bona = std::exp(z.bonafide - lse);
  const T p_spoof = std::exp(z.spoof - lse);
  const T loss = -wl * (z[label] - lse);
  const T y_bona = label == Label::kBonafide ? T(1) : T(0);
  return {loss, {wl * (p_bona - y_bona), wl * (p_spoof - (T(1) - y_bona))}};
}

/// Accumulates d loss / d params into `grad` given d loss / d logits.
template <typename T>
void model_backward(const Logits<T>& dlogits, const ModelCache<T>& c,
                    const ModelParams<T>& p, ModelParams<T>& grad, Pooling rule) {
  const std::size_t W = p.head_w.rows(), L = c.frames;
  for (std::size_t i = 0; i < W; ++i) {
    grad.head_w(i, 0) += c.pooled(0, i) * dlogits.bonafide;
    grad.head_w(i, 1) += c.pooled(0, i) * dlogits.spoof;
  }
  grad.head_b(0, 0) += dlogits.bonafide;
  grad.head_b(0, 1) += dlogits.spoof;
  Matrix<T> dh(L, W);
  for (std::size_t i = 0; i < W; ++i) {
    const T dp = p.head_w(i, 0) * dlogits.bonafide + p.head_w(i, 1) * dlogits.spoof;
    if (rule == Pooling::kMean) {
      for (std::size_t t = 0; t < L; ++t) dh(t, i) = dp / T(L);
    } else {
      dh(c.argmax[i], i) = dp;
    }
  }
  const Matrix<T> dx0 = stack_backward(dh, c.trunk, p.trunk, grad.trunk);
  accumulate_xt_dy(c.input, dx0, grad.proj_w);
  accumulate_column_sums(dx0, grad.proj_b);
}

}  // namespace xmamba
