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

#include <cmath>
#include <cstddef>
#include <type_traits>
#include <string>

#include "xmamba/param_tree.hpp"
#include "xmamba/random.hpp"
#include "xmamba/ssm_core.hpp"
#include "xmamba/tensor.hpp"

namespace xmamba {

template <typename T>
T silu(T v) {
  return v * sigmoid(v);
}

template <typename T>
T silu_derivative(T v) {
  const T s = sigmoid(v);
  return s * (T(1) + v * (T(1) - s));
}

template <typename T>
Matrix<T> silu(const Matrix<T>& m) {
  Matrix<T> out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) out.data()[i] = silu(m.data()[i]);
  return out;
}

template <typename T>
void fill_uniform(Matrix<T>& m, Rng& rng, double bound) {
  for (auto& v : m.values()) v = static_cast<T>(rng.uniform(-bound, bound));
}

// ---------------------------------------------------------------------------
// Layer normalization over the feature axis.

inline constexpr double kNormEpsilon = 1e-5;

template <typename T>
struct LayerNormParams {
  Matrix<T> gain;    // [1 x D]
  Matrix<T> offset;  // [1 x D]

  LayerNormParams() = default;
  explicit LayerNormParams(std::size_t d) : gain(1, d, T(1)), offset(1, d) {}

  template <typename F>
  void for_each_tensor(F&& f) {
    f("gain", gain);
    f("offset", offset);
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    f("gain", gain);
    f("offset", offset);
  }
};

template <typename T>
struct LayerNormCache {
  Matrix<T> xhat;
  std::vector<T> inv_std;
};

template <typename T>
Matrix<T> layer_norm_forward(const Matrix<T>& x, const LayerNormParams<T>& p,
                             std::type_identity_t<LayerNormCache<T>>* cache = nullptr) {
  require(x.cols() == p.gain.cols(), "layer_norm: width mismatch");
  const std::size_t L = x.rows(), D = x.cols();
  Matrix<T> y(L, D), xhat(L, D);
  std::vector<T> inv(L);
  for (std::size_t t = 0; t < L; ++t) {
    T mean = T(0);
    for (std::size_t i = 0; i < D; ++i) mean += x(t, i);
    mean /= T(D);
    T var = T(0);
    for (std::size_t i = 0; i < D; ++i) var += (x(t, i) - mean) * (x(t, i) - mean);
    var /= T(D);
    inv[t] = T(1) / std::sqrt(var + T(kNormEpsilon));
    for (std::size_t i = 0; i < D; ++i) {
      xhat(t, i) = (x(t, i) - mean) * inv[t];
      y(t, i) = xhat(t, i) * p.gain(0, i) + p.offset(0, i);
    }
  }
  if (cache != nullptr) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv);
  }
  return y;
}

template <typename T>
Matrix<T> layer_norm_backward(const Matrix<T>& dy, const LayerNormCache<T>& c,
                              const LayerNormParams<T>& p,
                              LayerNormParams<T>& grad) {
  const std::size_t L = dy.rows(), D = dy.cols();
  Matrix<T> dx(L, D);
  std::vector<T> dxhat(D);
  for (std::size_t t = 0; t < L; ++t) {
    T mean_d = T(0), mean_dx = T(0);
    for (std::size_t i = 0; i < D; ++i) {
      grad.gain(0, i) += dy(t, i) * c.xhat(t, i);
      grad.offset(0, i) += dy(t, i);
      dxhat[i] = dy(t, i) * p.gain(0, i);
      mean_d += dxhat[i];
      mean_dx += dxhat[i] * c.xhat(t, i);
    }
    mean_d /= T(D);
    mean_dx /= T(D);
    for (std::size_t i = 0; i < D; ++i)
      dx(t, i) = c.inv_std[t] * (dxhat[i] - mean_d - c.xhat(t, i) * mean_dx);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Depthwise causal convolution. kernel(d, k) multiplies u_{t-(K-1)+k}, so the
// last tap is the current frame and earlier frames are left zero-padded.

template <typename T>
Matrix<T> causal_conv1d(const Matrix<T>& u, const Matrix<T>& kernel,
                        const Matrix<T>& bias) {
  require(kernel.rows() == u.cols() && bias.cols() == u.cols(),
          "causal_conv1d: channel mismatch");
  const std::size_t L = u.rows(), D = u.cols(), K = kernel.cols();
  const Matrix<T> taps = transpose(kernel);  // [K x D]
  Matrix<T> y(L, D);
  for (std::size_t t = 0; t < L; ++t) {
    T* yt = y.row(t).data();
    std::copy_n(bias.data(), D, yt);
    for (std::size_t k = 0; k < K; ++k) {
      const std::size_t back = K - 1 - k;
      if (back > t) continue;
      const T* w = taps.row(k).data();
      const T* ut = u.row(t - back).data();
      for (std::size_t d = 0; d < D; ++d) yt[d] += w[d] * ut[d];
    }
  }
  return y;
}

template <typename T>
Matrix<T> causal_conv1d_backward(const Matrix<T>& dy, const Matrix<T>& u,
                                 const Matrix<T>& kernel, Matrix<T>& grad_kernel,
                                 Matrix<T>& grad_bias) {
  const std::size_t L = u.rows(), D = u.cols(), K = kernel.cols();
  Matrix<T> du(L, D);
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t d = 0; d < D; ++d) {
      const T g = dy(t, d);
      grad_bias(0, d) += g;
      for (std::size_t k = 0; k < K; ++k) {
        const std::size_t back = K - 1 - k;
        if (back <= t) {
          grad_kernel(d, k) += g * u(t - back, d);
          du(t - back, d) += g * kernel(d, k);
        }
      }
    }
  return du;
}

// ---------------------------------------------------------------------------
// Inner branch: causal conv -> SiLU -> selective SSM, over d_inner channels.

template <typename T>
struct BranchParams {
  Matrix<T> conv_kernel;  // [d_inner x k_conv]
  Matrix<T> conv_bias;    // [1 x d_inner]
  ContinuousSsm<T> ssm;

  BranchParams() = default;
  BranchParams(std::size_t d_inner, std::size_t n_state, std::size_t k_conv)
      : conv_kernel(d_inner, k_conv), conv_bias(1, d_inner), ssm(d_inner, n_state) {}

  template <typename F>
  void for_each_tensor(F&& f) {
    f("conv_kernel", conv_kernel);
    f("conv_bias", conv_bias);
    ssm.for_each_tensor(prefixed("ssm.", f));
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    f("conv_kernel", conv_kernel);
    f("conv_bias", conv_bias);
    ssm.for_each_tensor(prefixed("ssm.", f));
  }

  void initialize(Rng& rng) {
    const double bound = 1.0 / std::sqrt(double(conv_kernel.cols()));
    fill_uniform(conv_kernel, rng, bound);
    fill_uniform(conv_bias, rng, bound);
    ssm.initialize(rng);
  }
};

template <typename T>
struct BranchCache {
  Matrix<T> u;
  Matrix<T> conv_out;
  SelectiveScanCache<T> scan;
};

template <typename T>
Matrix<T> branch_forward(const Matrix<T>& u, const BranchParams<T>& p,
                         std::type_identity_t<BranchCache<T>>* cache = nullptr,
                         ScanAlgorithm algo = ScanAlgorithm::kSequential) {
  Matrix<T> conv = causal_conv1d(u, p.conv_kernel, p.conv_bias);
  const Matrix<T> v = silu(conv);
  Matrix<T> y = selective_scan_forward(v, p.ssm,
                                       cache != nullptr ? &cache->scan : nullptr, algo);
  if (cache != nullptr) {
    cache->u = u;
    cache->conv_out = std::move(conv);
  }
  return y;
}

template <typename T>
Matrix<T> branch_backward(const Matrix<T>& dy, const BranchCache<T>& c,
                          const BranchParams<T>& p, BranchParams<T>& grad) {
  Matrix<T> dv = selective_scan_backward(dy, c.scan, p.ssm, grad.ssm);
  for (std::size_t i = 0; i < dv.size(); ++i)
    dv.data()[i] *= silu_derivative(c.conv_out.data()[i]);
  return causal_conv1d_backward(dv, c.u, p.conv_kernel, grad.conv_kernel,
                                grad.conv_bias);
}

// ---------------------------------------------------------------------------
// Unidirectional Mamba block:
//   (u, g) = split(norm(x) * in_proj)
//   y = [x +] (branch(u) (.) silu(g)) * out_proj

struct BlockShape {
  std::size_t d_model = 0;
  std::size_t d_inner = 0;
  std::size_t n_state = 16;
  std::size_t k_conv = 3;
};

template <typename T>
struct MambaBlockParams {
  LayerNormParams<T> norm;
  Matrix<T> in_proj;   // [d_model x 2 d_inner]; ssm path first, then gate
  BranchParams<T> branch;
  Matrix<T> out_proj;  // [d_inner x d_model]

  MambaBlockParams() = default;
  explicit MambaBlockParams(const BlockShape& s)
      : norm(s.d_model),
        in_proj(s.d_model, 2 * s.d_inner),
        branch(s.d_inner, s.n_state, s.k_conv),
        out_proj(s.d_inner, s.d_model) {}

  std::size_t d_model() const noexcept { return in_proj.rows(); }
  std::size_t d_inner() const noexcept { return out_proj.rows(); }

  template <typename F>
  void for_each_tensor(F&& f) {
    norm.for_each_tensor(prefixed("norm.", f));
    f("in_proj", in_proj);
    branch.for_each_tensor(prefixed("branch.", f));
    f("out_proj", out_proj);
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    norm.for_each_tensor(prefixed("norm.", f));
    f("in_proj", in_proj);
    branch.for_each_tensor(prefixed("branch.", f));
    f("out_proj", out_proj);
  }

  void initialize(Rng& rng) {
    fill_uniform(in_proj, rng, 1.0 / std::sqrt(double(in_proj.rows())));
    branch.initialize(rng);
    fill_uniform(out_proj, rng, 1.0 / std::sqrt(double(out_proj.rows())));
  }
};

template <typename T>
struct BlockActivationCache {
  LayerNormCache<T> norm;
  Matrix<T> normed;
  Matrix<T> gate;  // pre-activation gate g
  BranchCache<T> branch;
  Matrix<T> ssm_out;
  Matrix<T> gated;
};

namespace detail {
// z = y (.) silu(g)
template <typename T>
Matrix<T> apply_gate(const Matrix<T>& y, const Matrix<T>& g) {
  Matrix<T> z(y.rows(), y.cols());
  for (std::size_t i = 0; i < z.size(); ++i)
    z.data()[i] = y.data()[i] * silu(g.data()[i]);
  return z;
}

template <typename T>
void gate_backward(const Matrix<T>& dz, const Matrix<T>& y, const Matrix<T>& g,
                   Matrix<T>& dy, Matrix<T>& dg) {
  dy = Matrix<T>(dz.rows(), dz.cols());
  dg = Matrix<T>(dz.rows(), dz.cols());
  for (std::size_t i = 0; i < dz.size(); ++i) {
    const T gv = g.data()[i];
    dy.data()[i] = dz.data()[i] * silu(gv);
    dg.data()[i] = dz.data()[i] * y.data()[i] * silu_derivative(gv);
  }
}

template <typename T>
void check_block_input(const Matrix<T>& x, std::size_t d_model) {
  require(x.cols() == d_model, "block: input width " + std::to_string(x.cols()) +
                                   " does not match d_model " +
                                   std::to_string(d_model));
  require(x.rows() >= 1, "block: empty sequence");
}
}  // namespace detail

template <typename T>
Matrix<T> mamba_block_forward(const Matrix<T>& x, const MambaBlockParams<T>& p,
                              std::type_identity_t<BlockActivationCache<T>>* cache = nullptr,
                              bool residual = true,
                              ScanAlgorithm algo = ScanAlgorithm::kSequential) {
  detail::check_block_input(x, p.d_model());
  LayerNormCache<T>* nc = cache != nullptr ? &cache->norm : nullptr;
  Matrix<T> normed = layer_norm_forward(x, p.norm, nc);
  auto [u, g] = split_features(matmul(normed, p.in_proj), p.d_inner());
  Matrix<T> y = branch_forward(u, p.branch,
                               cache != nullptr ? &cache->branch : nullptr, algo);
  Matrix<T> z = detail::apply_gate(y, g);
  Matrix<T> out = matmul(z, p.out_proj);
  if (residual) add_inplace(out, x);
  if (cache != nullptr) {
    cache->normed = std::move(normed);
    cache->gate = std::move(g);
    cache->ssm_out = std::move(y);
    cache->gated = std::move(z);
  }
  return out;
}

template <typename T>
Matrix<T> mamba_block_backward(const Matrix<T>& dout,
                               const BlockActivationCache<T>& c,
                               const MambaBlockParams<T>& p,
                               MambaBlockParams<T>& grad, bool residual = true) {
  accumulate_xt_dy(c.gated, dout, grad.out_proj);
  const Matrix<T> dz = matmul_dy_wt(dout, p.out_proj);
  Matrix<T> dy, dg;
  detail::gate_backward(dz, c.ssm_out, c.gate, dy, dg);
  const Matrix<T> du = branch_backward(dy, c.branch, p.branch, grad.branch);
  const Matrix<T> dproj = concat_features(du, dg);
  accumulate_xt_dy(c.normed, dproj, grad.in_proj);
  Matrix<T> dx =
      layer_norm_backward(matmul_dy_wt(dproj, p.in_proj), c.norm, p.norm, grad.norm);
  if (residual) add_inplace(dx, dout);
  return dx;
}

}  // namespace xmamba
