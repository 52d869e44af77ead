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

// Selective state space primitive.
//
// Per channel the recurrence is
//     h_t = a_bar_t (.) h_{t-1} + b_bar_x_t,     y_t = <c_t, h_t>
// with a diagonal state matrix, so every state lane evolves independently and
// the whole sequence can be evaluated either left-to-right or with an
// associative (parallel-prefix) scan over (a_bar, b_bar_x) pairs.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstddef>
#include <type_traits>
#include <span>
#include <string_view>
#include <vector>

#include "xmamba/random.hpp"
#include "xmamba/tensor.hpp"

namespace xmamba {

/// Continuous-time selective SSM over `d_inner` channels.
///
/// A is diagonal per channel and stored as log(-A), so A = -exp(a_log) is
/// strictly negative for any finite parameter value. B_t and C_t are bias-free
/// linear maps of the input frame; the step size is
/// Delta_t = softplus(x_t * delta_proj + delta_bias) > 0.
template <typename T>
struct ContinuousSsm {
  Matrix<T> a_log;       // [d_inner x n_state]
  Matrix<T> b_proj;      // [d_inner x n_state]
  Matrix<T> c_proj;      // [d_inner x n_state]
  Matrix<T> delta_proj;  // [d_inner x d_inner]
  Matrix<T> delta_bias;  // [1 x d_inner]

  ContinuousSsm() = default;
  ContinuousSsm(std::size_t d_inner, std::size_t n_state)
      : a_log(d_inner, n_state),
        b_proj(d_inner, n_state),
        c_proj(d_inner, n_state),
        delta_proj(d_inner, d_inner),
        delta_bias(1, d_inner) {}

  std::size_t d_inner() const noexcept { return a_log.rows(); }
  std::size_t n_state() const noexcept { return a_log.cols(); }

  T a(std::size_t d, std::size_t n) const { return -std::exp(a_log(d, n)); }

  template <typename F>
  void for_each_tensor(F&& f) {
    f("a_log", a_log);
    f("b_proj", b_proj);
    f("c_proj", c_proj);
    f("delta_proj", delta_proj);
    f("delta_bias", delta_bias);
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    f("a_log", a_log);
    f("b_proj", b_proj);
    f("c_proj", c_proj);
    f("delta_proj", delta_proj);
    f("delta_bias", delta_bias);
  }

  /// -A log-uniform over [1, n_state] per channel; softplus(delta_bias)
  /// log-uniform over [1e-3, 1e-1]; projections uniform(+-1/sqrt(d_inner)).
  void initialize(Rng& rng) {
    const std::size_t di = d_inner(), ns = n_state();
    for (std::size_t d = 0; d < di; ++d)
      for (std::size_t n = 0; n < ns; ++n) {
        const double frac = ns > 1 ? double(n) / double(ns - 1) : 0.0;
        a_log(d, n) = static_cast<T>(frac * std::log(double(ns)));
      }
    const double bound = 1.0 / std::sqrt(double(di));
    for (auto* m : {&b_proj, &c_proj, &delta_proj})
      for (auto& v : m->values()) v = static_cast<T>(rng.uniform(-bound, bound));
    for (std::size_t d = 0; d < di; ++d) {
      const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
      delta_bias(0, d) = static_cast<T>(inverse_softplus(dt));
    }
  }
};

/// One discretized step for a single channel: a_bar, b_bar * x and c, each
/// over the n_state lanes.
template <typename T>
struct DiscreteStep {
  std::vector<T> a_bar;
  std::vector<T> b_bar_x;
  std::vector<T> c;
};

/// Hidden state of one channel.
template <typename T>
using ScanState = std::vector<T>;

inline constexpr double kZohLimitThreshold = 1e-8;

/// Zero-order-hold coefficients for one diagonal lane: a_bar = exp(delta*a)
/// and q = (exp(delta*a) - 1) / a, so that b_bar = q * B. Near a*delta = 0
/// the limit q = delta is taken.
template <typename T>
struct ZohCoefficients {
  T a_bar;
  T q;
};

template <typename T>
ZohCoefficients<T> zoh_coefficients(T delta, T a) {
  const T z = delta * a;
  if (std::abs(z) < T(kZohLimitThreshold)) return {std::exp(z), delta};
  const T em1 = std::expm1(z);
  return {std::exp(z), em1 / a};
}

namespace detail {

// All ones when |v| < limit, for a non-negative finite limit.
inline std::int32_t abs_less_mask(float v, float limit) {
  const std::int32_t bits = std::bit_cast<std::int32_t>(v) & 0x7fffffff;
  return -static_cast<std::int32_t>(bits < std::bit_cast<std::int32_t>(limit));
}

// Taylor series of expm1, used where e^z - 1 would cancel (|z| < 0.5).
inline float expm1_small(float z) {
  float p = 1.0f / 40320.0f;
  p = p * z + 1.0f / 5040.0f;
  p = p * z + 1.0f / 720.0f;
  p = p * z + 1.0f / 120.0f;
  p = p * z + 1.0f / 24.0f;
  p = p * z + 1.0f / 6.0f;
  p = p * z + 0.5f;
  p = p * z + 1.0f;
  return p * z;
}

}  // namespace detail

/// zoh_coefficients over n lanes, lane i with step delta[i] and diagonal
/// entry a[i]. The float version uses the branch-free approximations above.
template <typename T>
void zoh_lanes(const T* delta, const T* a, T* a_bar, T* q, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = zoh_coefficients(delta[i], a[i]);
    a_bar[i] = k.a_bar;
    q[i] = k.q;
  }
}

template <>
XMAMBA_ALWAYS_INLINE inline void zoh_lanes<float>(const float* __restrict delta, const float* __restrict a,
                             float* __restrict a_bar, float* __restrict q, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const float z = delta[i] * a[i];
    const float e = detail::exp_lane(z);
    const float s = detail::expm1_small(z);
    const std::int32_t near = detail::abs_less_mask(z, 0.5f);
    const float em1 = detail::select_bits(near, s, e - 1.0f);
    a_bar[i] = detail::select_bits(near, 1.0f + s, e);
    q[i] = detail::select_bits(detail::abs_less_mask(z, float(kZohLimitThreshold)), delta[i],
                               em1 / a[i]);
  }
}

// d q / d a = delta^2 * psi(delta * a), psi(z) = (z e^z - e^z + 1) / z^2.
template <typename T>
T zoh_dq_da(T delta, T a) {
  const double z = double(delta) * double(a);
  double psi;
  if (std::abs(z) < 1e-3) {
    psi = 0.5 + z / 3.0 + z * z / 8.0 + z * z * z / 30.0;
  } else {
    const double em1 = std::expm1(z);
    psi = (z * (1.0 + em1) - em1) / (z * z);
  }
  return static_cast<T>(double(delta) * double(delta) * psi);
}

/// Zero-order-hold discretization of one channel at one time step.
/// `a_diag` are the (negative) diagonal entries, `b` and `c` the selective
/// input/output vectors for this step and `x` the channel input.
template <typename T>
DiscreteStep<T> discretize_zoh(std::span<const T> a_diag, T delta,
                               std::span<const T> b, T x,
                               std::span<const T> c) {
  require(a_diag.size() == b.size() && b.size() == c.size(),
          "discretize_zoh: state width mismatch");
  require(std::isfinite(delta) && std::isfinite(x) && all_finite(a_diag) &&
              all_finite(b) && all_finite(c),
          "non-finite input", ErrorKind::kNumerical);
  assert(delta > T(0));
  DiscreteStep<T> step;
  const std::size_t n = a_diag.size();
  step.a_bar.resize(n);
  step.b_bar_x.resize(n);
  step.c.assign(c.begin(), c.end());
  const std::vector<T> deltas(n, delta);
  zoh_lanes(deltas.data(), a_diag.data(), step.a_bar.data(), step.b_bar_x.data(), n);
  for (std::size_t i = 0; i < n; ++i) step.b_bar_x[i] = step.b_bar_x[i] * b[i] * x;
  return step;
}

/// A discretized sequence for one channel, stored as [length x n_state]
/// row-major arrays.
template <typename T>
struct ScanSequence {
  std::size_t length = 0;
  std::size_t n_state = 0;
  std::vector<T> a_bar;
  std::vector<T> bx;
  std::vector<T> c;

  ScanSequence() = default;
  ScanSequence(std::size_t l, std::size_t n)
      : length(l), n_state(n), a_bar(l * n), bx(l * n), c(l * n) {}

  static ScanSequence from_steps(std::span<const DiscreteStep<T>> steps) {
    ScanSequence s;
    s.length = steps.size();
    s.n_state = steps.empty() ? 0 : steps.front().a_bar.size();
    for (const auto& st : steps) {
      require(st.a_bar.size() == s.n_state && st.b_bar_x.size() == s.n_state &&
                  st.c.size() == s.n_state,
              "scan: steps disagree on n_state");
      s.a_bar.insert(s.a_bar.end(), st.a_bar.begin(), st.a_bar.end());
      s.bx.insert(s.bx.end(), st.b_bar_x.begin(), st.b_bar_x.end());
      s.c.insert(s.c.end(), st.c.begin(), st.c.end());
    }
    return s;
  }
};

namespace detail {
template <typename T>
void check_h0(const ScanSequence<T>& seq, const ScanState<T>& h0) {
  require(h0.empty() || h0.size() == seq.n_state,
          "scan: initial state width mismatch");
}
}  // namespace detail

/// Strict left-to-right evaluation of the recurrence. `h0` empty means the
/// zero state. When `states` is given it receives h_1..h_L as [L x n_state].
template <typename T>
std::vector<T> scan_sequential(const ScanSequence<T>& seq,
                               const ScanState<T>& h0 = {},
                               std::vector<T>* states = nullptr) {
  detail::check_h0(seq, h0);
  const std::size_t L = seq.length, N = seq.n_state;
  std::vector<T> y(L);
  std::vector<T> h = h0.empty() ? std::vector<T>(N, T(0)) : h0;
  if (states != nullptr) states->resize(L * N);
  for (std::size_t t = 0; t < L; ++t) {
    const T* a = seq.a_bar.data() + t * N;
    const T* b = seq.bx.data() + t * N;
    const T* c = seq.c.data() + t * N;
    T acc = T(0);
    for (std::size_t n = 0; n < N; ++n) {
      h[n] = a[n] * h[n] + b[n];
      acc += c[n] * h[n];
    }
    y[t] = acc;
    if (states != nullptr) std::copy(h.begin(), h.end(), states->begin() + t * N);
  }
  return y;
}

/// Inclusive prefix composition of (a, b) pairs, in place, with
/// (a2, b2) o (a1, b1) = (a2 a1, a2 b1 + b2). Up-sweep/down-sweep tree scan:
/// O(L) combines over O(log L) levels; within a level all combines are
/// independent. Each element is `width` lanes wide.
template <typename T>
void associative_scan(std::span<T> a, std::span<T> b, std::size_t length,
                      std::size_t width) {
  auto combine = [&](std::size_t later, std::size_t earlier) {
    T* al = a.data() + later * width;
    T* bl = b.data() + later * width;
    const T* ae = a.data() + earlier * width;
    const T* be = b.data() + earlier * width;
    for (std::size_t n = 0; n < width; ++n) {
      bl[n] = al[n] * be[n] + bl[n];
      al[n] = al[n] * ae[n];
    }
  };
  std::size_t top = 1;
  for (std::size_t s = 1; s < length; s *= 2) {
    for (std::size_t i = 2 * s - 1; i < length; i += 2 * s) combine(i, i - s);
    top = s;
  }
  for (std::size_t s = top / 2; s >= 1; s /= 2)
    for (std::size_t i = 3 * s - 1; i < length; i += 2 * s) combine(i, i - s);
}

/// Same contract as scan_sequential, evaluated through associative_scan.
template <typename T>
std::vector<T> scan_parallel(const ScanSequence<T>& seq,
                             const ScanState<T>& h0 = {},
                             std::vector<T>* states = nullptr) {
  detail::check_h0(seq, h0);
  const std::size_t L = seq.length, N = seq.n_state;
  std::vector<T> a = seq.a_bar, b = seq.bx;
  associative_scan<T>(a, b, L, N);
  std::vector<T> y(L);
  for (std::size_t t = 0; t < L; ++t) {
    T* bt = b.data() + t * N;
    const T* at = a.data() + t * N;
    const T* c = seq.c.data() + t * N;
    T acc = T(0);
    for (std::size_t n = 0; n < N; ++n) {
      if (!h0.empty()) bt[n] += at[n] * h0[n];
      acc += c[n] * bt[n];
    }
    y[t] = acc;
  }
  if (states != nullptr) *states = std::move(b);
  return y;
}

/// Convolution kernel of a time-invariant SSM: K[k] = <c, a_bar^k (.) b_bar>.
template <typename T>
std::vector<T> ssm_kernel(std::span<const T> a_bar, std::span<const T> b_bar,
                          std::span<const T> c, std::ptrdiff_t length) {
  require(length > 0, "ssm_kernel: length must be positive");
  require(a_bar.size() == b_bar.size() && b_bar.size() == c.size(),
          "ssm_kernel: state width mismatch");
  std::vector<T> power(b_bar.begin(), b_bar.end());
  std::vector<T> k(static_cast<std::size_t>(length));
  for (auto& kv : k) {
    T acc = T(0);
    for (std::size_t n = 0; n < power.size(); ++n) {
      acc += c[n] * power[n];
      power[n] *= a_bar[n];
    }
    kv = acc;
  }
  return k;
}

/// Causal convolution y_t = sum_{k<=t} K[k] x_{t-k}.
template <typename T>
std::vector<T> apply_kernel_conv(std::span<const T> x, std::span<const T> k) {
  require(x.size() == k.size(), "apply_kernel_conv: length mismatch");
  std::vector<T> y(x.size(), T(0));
  for (std::size_t t = 0; t < x.size(); ++t) {
    T acc = T(0);
    for (std::size_t j = 0; j <= t; ++j) acc += k[j] * x[t - j];
    y[t] = acc;
  }
  return y;
}

template <typename T>
struct ScanGradients {
  std::vector<T> a_bar;  // [L x N]
  std::vector<T> bx;     // [L x N]
  std::vector<T> c;      // [L x N]
  ScanState<T> h0;       // [N]
};

/// Reverse-mode gradients of scan outputs. The adjoint state obeys the
/// right-to-left recurrence g_t = c_t * dy_t + a_bar_{t+1} (.) g_{t+1}.
/// `states` are the h_1..h_L written by the forward scan.
template <typename T>
ScanGradients<T> scan_backward(std::span<const T> grad_y,
                               const ScanSequence<T>& seq,
                               std::span<const T> states,
                               const ScanState<T>& h0 = {}) {
  const std::size_t L = seq.length, N = seq.n_state;
  require(grad_y.size() == L, "scan_backward: grad_y length mismatch");
  require(states.size() == L * N, "scan_backward: cache shape mismatch");
  detail::check_h0(seq, h0);
  ScanGradients<T> g{std::vector<T>(L * N), std::vector<T>(L * N),
                     std::vector<T>(L * N), ScanState<T>(N, T(0))};
  std::vector<T> adj(N, T(0));
  for (std::size_t t = L; t-- > 0;) {
    const T gy = grad_y[t];
    const T* c = seq.c.data() + t * N;
    const T* h = states.data() + t * N;
    const T* hprev = t > 0 ? states.data() + (t - 1) * N : nullptr;
    const T* a_next = t + 1 < L ? seq.a_bar.data() + (t + 1) * N : nullptr;
    for (std::size_t n = 0; n < N; ++n) {
      adj[n] = c[n] * gy + (a_next != nullptr ? a_next[n] * adj[n] : T(0));
      g.c[t * N + n] = gy * h[n];
      g.bx[t * N + n] = adj[n];
      const T hp = hprev != nullptr ? hprev[n] : (h0.empty() ? T(0) : h0[n]);
      g.a_bar[t * N + n] = adj[n] * hp;
    }
  }
  if (L > 0)
    for (std::size_t n = 0; n < N; ++n) g.h0[n] = seq.a_bar[n] * adj[n];
  return g;
}

/// Input-dependent parameters for every frame of a [L x d_inner] input.
template <typename T>
struct SelectiveParams {
  Matrix<T> delta_raw;  // [L x d_inner], pre-softplus
  Matrix<T> delta;      // [L x d_inner]
  Matrix<T> b;          // [L x n_state]
  Matrix<T> c;          // [L x n_state]
};

template <typename T>
SelectiveParams<T> selective_params(const Matrix<T>& x,
                                    const ContinuousSsm<T>& ssm) {
  require(x.cols() == ssm.d_inner(), "selective_params: width mismatch");
  require(all_finite(x), "non-finite input", ErrorKind::kNumerical);
  SelectiveParams<T> p;
  p.delta_raw = matmul(x, ssm.delta_proj, &ssm.delta_bias);
  p.delta = Matrix<T>(x.rows(), x.cols());
  for (std::size_t i = 0; i < p.delta.size(); ++i)
    p.delta.data()[i] = softplus(p.delta_raw.data()[i]);
  p.b = matmul(x, ssm.b_proj);
  p.c = matmul(x, ssm.c_proj);
  return p;
}

enum class ScanAlgorithm { kSequential, kParallel };

inline ScanAlgorithm parse_scan_algorithm(std::string_view s) {
  if (s == "sequential") return ScanAlgorithm::kSequential;
  if (s == "parallel") return ScanAlgorithm::kParallel;
  throw Error("unknown scan '" + std::string(s) + "' (expected sequential|parallel)",
              ErrorKind::kUsage);
}

namespace detail {

// One frame of the selective recurrence over N x D lanes (lane (n, d) at
// n * D + d): discretize, advance h, and write y[d] = sum_n c[n] h(n, d),
// summed in increasing n like scan_sequential.
template <typename T>
XMAMBA_ALWAYS_INLINE inline void scan_frame_impl(const T* __restrict delta, const T* __restrict a_t,
                                                 const T* __restrict b, const T* __restrict c,
                                                 const T* __restrict x, T* __restrict h,
                                                 T* __restrict ab, T* __restrict q,
                                                 T* __restrict bx, T* __restrict y,
                                                 std::size_t N, std::size_t D) {
  for (std::size_t n = 0; n < N; ++n) {
    T* __restrict hn = h + n * D;
    T* __restrict abn = ab + n * D;
    T* __restrict qn = q + n * D;
    T* __restrict bxn = bx + n * D;
    zoh_lanes(delta, a_t + n * D, abn, qn, D);
    const T bv = b[n], cv = c[n];
    for (std::size_t d = 0; d < D; ++d) {
      bxn[d] = qn[d] * bv * x[d];
      hn[d] = abn[d] * hn[d] + bxn[d];
    }
    if (n == 0) {
      for (std::size_t d = 0; d < D; ++d) y[d] = T(0) + cv * hn[d];
    } else {
      for (std::size_t d = 0; d < D; ++d) y[d] += cv * hn[d];
    }
  }
}

template <typename T>
void scan_frame(const T* delta, const T* a_t, const T* b, const T* c, const T* x, T* h, T* ab,
                T* q, T* bx, T* y, std::size_t N, std::size_t D) {
  scan_frame_impl(delta, a_t, b, c, x, h, ab, q, bx, y, N, D);
}

XMAMBA_CLONES inline void scan_frame(const float* delta, const float* a_t, const float* b,
                                     const float* c, const float* x, float* h, float* ab,
                                     float* q, float* bx, float* y, std::size_t N,
                                     std::size_t D) {
  scan_frame_impl(delta, a_t, b, c, x, h, ab, q, bx, y, N, D);
}

}  // namespace detail

/// Everything the selective scan backward pass needs.
template <typename T>
struct SelectiveScanCache {
  Matrix<T> x;
  SelectiveParams<T> params;
  std::vector<ScanSequence<T>> sequences;  // one per channel
  std::vector<std::vector<T>> states;      // one per channel, [L x N]
  std::vector<std::vector<T>> q;           // ZOH input gains, one per channel, [L x N]
};

/// Runs the selective SSM over every channel of x [L x d_inner]. The cache is
/// filled when `cache` is non-null.
template <typename T>
Matrix<T> selective_scan_forward(const Matrix<T>& x,
                                 const ContinuousSsm<T>& ssm,
                                 std::type_identity_t<SelectiveScanCache<T>>* cache = nullptr,
                                 ScanAlgorithm algo = ScanAlgorithm::kSequential) {
  const std::size_t L = x.rows(), D = ssm.d_inner(), N = ssm.n_state();
  SelectiveParams<T> sp = selective_params(x, ssm);
  Matrix<T> y(L, D);
  Matrix<T> a_t(N, D);  // transposed so per-frame loops run over channels
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t n = 0; n < N; ++n) a_t(n, d) = ssm.a(d, n);
  if (cache != nullptr) {
    cache->sequences.assign(D, ScanSequence<T>(L, N));
    cache->states.assign(D, std::vector<T>(L * N));
    cache->q.assign(D, std::vector<T>(L * N));
  }
  if (algo == ScanAlgorithm::kSequential) {
    // Time-major fused loop over [N x D] lane blocks.
    Matrix<T> h(N, D), ab(N, D), q(N, D), bx(N, D);
    for (std::size_t t = 0; t < L; ++t) {
      const T* ct = sp.c.row(t).data();
      detail::scan_frame(sp.delta.row(t).data(), a_t.data(), sp.b.row(t).data(), ct,
                         x.row(t).data(), h.data(), ab.data(), q.data(), bx.data(),
                         y.row(t).data(), N, D);
      if (cache != nullptr) {
        const std::size_t at = t * N;
        for (std::size_t d = 0; d < D; ++d) {
          ScanSequence<T>& seq = cache->sequences[d];
          std::copy_n(ct, N, seq.c.data() + at);
          for (std::size_t n = 0; n < N; ++n) {
            seq.a_bar[at + n] = ab(n, d);
            seq.bx[at + n] = bx(n, d);
            cache->q[d][at + n] = q(n, d);
            cache->states[d][at + n] = h(n, d);
          }
        }
      }
    }
  } else {
    ScanSequence<T> local(L, N);
    std::vector<T> a_row(N), q(N), deltas(N);
    for (std::size_t d = 0; d < D; ++d) {
      ScanSequence<T>& seq = cache != nullptr ? cache->sequences[d] : local;
      for (std::size_t n = 0; n < N; ++n) a_row[n] = a_t(n, d);
      for (std::size_t t = 0; t < L; ++t) {
        const std::size_t at = t * N;
        const T xv = x(t, d);
        std::fill(deltas.begin(), deltas.end(), sp.delta(t, d));
        zoh_lanes(deltas.data(), a_row.data(), seq.a_bar.data() + at, q.data(), N);
        for (std::size_t n = 0; n < N; ++n) {
          seq.bx[at + n] = q[n] * sp.b(t, n) * xv;
          seq.c[at + n] = sp.c(t, n);
        }
        if (cache != nullptr) std::copy_n(q.data(), N, cache->q[d].data() + at);
      }
      const std::vector<T> yd =
          scan_parallel(seq, {}, cache != nullptr ? &cache->states[d] : nullptr);
      for (std::size_t t = 0; t < L; ++t) y(t, d) = yd[t];
    }
  }
  if (cache != nullptr) {
    cache->x = x;
    cache->params = std::move(sp);
  }
  return y;
}

/// Backward of selective_scan_forward: accumulates parameter gradients into
/// `grad` and returns d loss / d x.
template <typename T>
Matrix<T> selective_scan_backward(const Matrix<T>& grad_y,
                                  const SelectiveScanCache<T>& cache,
                                  const ContinuousSsm<T>& ssm,
                                  ContinuousSsm<T>& grad) {
  const Matrix<T>& x = cache.x;
  const SelectiveParams<T>& sp = cache.params;
  const std::size_t L = x.rows(), D = ssm.d_inner(), N = ssm.n_state();
  require(grad_y.rows() == L && grad_y.cols() == D,
          "selective_scan_backward: grad shape mismatch");
  require(cache.sequences.size() == D && cache.q.size() == D, "selective_scan_backward: bad cache");
  Matrix<T> dx(L, D), d_delta(L, D), db(L, N), dc(L, N);
  std::vector<T> gy(L);
  for (std::size_t d = 0; d < D; ++d) {
    for (std::size_t t = 0; t < L; ++t) gy[t] = grad_y(t, d);
    const ScanSequence<T>& seq = cache.sequences[d];
    const std::vector<T>& qd = cache.q[d];
    const ScanGradients<T> g =
        scan_backward<T>(gy, seq, cache.states[d]);
    for (std::size_t n = 0; n < N; ++n) {
      const T a = ssm.a(d, n);
      T da = T(0);
      for (std::size_t t = 0; t < L; ++t) {
        const std::size_t i = t * N + n;
        const T delta = sp.delta(t, d);
        const T xv = x(t, d);
        const T bt = sp.b(t, n);
        const T a_bar = seq.a_bar[i];
        const T z = delta * a;
        const bool limit = std::abs(z) < T(kZohLimitThreshold);
        const T q = qd[i];
        const T gbx = g.bx[i];
        const T dq = gbx * bt * xv;
        dc(t, n) += g.c[i];
        db(t, n) += gbx * q * xv;
        dx(t, d) += gbx * q * bt;
        const T ga = g.a_bar[i];
        d_delta(t, d) += ga * a_bar * a + dq * (limit ? T(1) : a_bar);
        da += ga * a_bar * delta + dq * zoh_dq_da(delta, a);
      }
      grad.a_log(d, n) += da * a;
    }
  }
  Matrix<T> d_raw(L, D);
  for (std::size_t i = 0; i < d_raw.size(); ++i)
    d_raw.data()[i] = d_delta.data()[i] * sigmoid(sp.delta_raw.data()[i]);
  add_inplace(dx, matmul_dy_wt(d_raw, ssm.delta_proj));
  add_inplace(dx, matmul_dy_wt(db, ssm.b_proj));
  add_inplace(dx, matmul_dy_wt(dc, ssm.c_proj));
  accumulate_xt_dy(x, d_raw, grad.delta_proj);
  accumulate_column_sums(d_raw, grad.delta_bias);
  accumulate_xt_dy(x, db, grad.b_proj);
  accumulate_xt_dy(x, dc, grad.c_proj);
  return dx;
}

}  // namespace xmamba
