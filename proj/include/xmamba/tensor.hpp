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
#include <bit>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

// Hot float kernels are compiled twice, for AVX2 and for the baseline ISA,
// and picked at load time. Elsewhere the attribute is empty.
#if defined(__GNUC__) && defined(__x86_64__) && defined(__linux__) && !defined(__clang__)
#define XMAMBA_CLONES __attribute__((target_clones("avx2", "default")))
#define XMAMBA_ALWAYS_INLINE __attribute__((always_inline))
#else
#define XMAMBA_CLONES
#define XMAMBA_ALWAYS_INLINE
#endif

namespace xmamba {

/// Error categories map onto CLI exit codes (usage=1, data=2, numerical=3).
enum class ErrorKind { kUsage = 1, kData = 2, kNumerical = 3 };

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, ErrorKind kind = ErrorKind::kData)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Dense row-major matrix. A sequence [T x D] stores frame t in row t.
template <typename T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
      throw Error("matrix data size does not match shape");
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) noexcept {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }
  const T& operator()(std::size_t r, std::size_t c) const noexcept {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }

  std::span<T> row(std::size_t r) noexcept {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<const T> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::vector<T>& values() noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Matrix& o) const noexcept {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  template <typename U>
  Matrix<U> cast() const {
    Matrix<U> out(rows_, cols_);
    std::transform(data_.begin(), data_.end(), out.data(),
                   [](T v) { return static_cast<U>(v); });
    return out;
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

template <typename T>
using FeatureSequence = Matrix<T>;

inline void require(bool cond, const std::string& what,
                    ErrorKind kind = ErrorKind::kData) {
  if (!cond) throw Error(what, kind);
}

template <typename T>
bool all_finite(std::span<const T> v) {
  return std::all_of(v.begin(), v.end(),
                     [](T x) { return std::isfinite(x); });
}

template <typename T>
bool all_finite(const Matrix<T>& m) {
  return all_finite(std::span<const T>(m.values()));
}

namespace detail {

// y[n x out] += x[n x in] * w[in x out], all row-major and dense.
template <typename T>
XMAMBA_ALWAYS_INLINE inline void matmul_rows_impl(const T* __restrict x, const T* __restrict w,
                                                  T* __restrict y, std::size_t n,
                                                  std::size_t in, std::size_t out) {
  for (std::size_t t = 0; t < n; ++t) {
    T* __restrict yr = y + t * out;
    for (std::size_t i = 0; i < in; ++i) {
      const T xv = x[t * in + i];
      const T* __restrict wr = w + i * out;
      for (std::size_t o = 0; o < out; ++o) yr[o] += xv * wr[o];
    }
  }
}

template <typename T>
void matmul_rows(const T* x, const T* w, T* y, std::size_t n, std::size_t in, std::size_t out) {
  matmul_rows_impl(x, w, y, n, in, out);
}

XMAMBA_CLONES inline void matmul_rows(const float* x, const float* w, float* y, std::size_t n,
                                      std::size_t in, std::size_t out) {
  matmul_rows_impl(x, w, y, n, in, out);
}

}  // namespace detail

// out[T x O] = x[T x I] * w[I x O] (+ bias[1 x O])
template <typename T>
Matrix<T> matmul(const Matrix<T>& x, const Matrix<T>& w,
                 const Matrix<T>* bias = nullptr) {
  require(x.cols() == w.rows(), "matmul: inner dimension mismatch");
  const std::size_t n = x.rows(), in = w.rows(), out = w.cols();
  Matrix<T> y(n, out);
  if (bias != nullptr)
    for (std::size_t t = 0; t < n; ++t) std::copy_n(bias->data(), out, y.row(t).data());
  detail::matmul_rows(x.data(), w.data(), y.data(), n, in, out);
  return y;
}

// grad_w[I x O] += x^T[I x T] * dy[T x O]
template <typename T>
void accumulate_xt_dy(const Matrix<T>& x, const Matrix<T>& dy,
                      Matrix<T>& grad_w) {
  const std::size_t n = x.rows(), in = x.cols(), out = dy.cols();
  for (std::size_t t = 0; t < n; ++t) {
    const T* xr = x.row(t).data();
    const T* dr = dy.row(t).data();
    for (std::size_t i = 0; i < in; ++i) {
      const T xv = xr[i];
      if (xv == T(0)) continue;
      T* gr = grad_w.row(i).data();
      for (std::size_t o = 0; o < out; ++o) gr[o] += xv * dr[o];
    }
  }
}

// dx[T x I] = dy[T x O] * w^T[O x I]
template <typename T>
Matrix<T> matmul_dy_wt(const Matrix<T>& dy, const Matrix<T>& w) {
  const std::size_t n = dy.rows(), in = w.rows(), out = w.cols();
  Matrix<T> dx(n, in);
  for (std::size_t t = 0; t < n; ++t) {
    const T* dr = dy.row(t).data();
    T* xr = dx.row(t).data();
    for (std::size_t i = 0; i < in; ++i) {
      const T* wr = w.row(i).data();
      T acc = T(0);
      for (std::size_t o = 0; o < out; ++o) acc += dr[o] * wr[o];
      xr[i] = acc;
    }
  }
  return dx;
}

template <typename T>
void accumulate_column_sums(const Matrix<T>& dy, Matrix<T>& grad_b) {
  for (std::size_t t = 0; t < dy.rows(); ++t)
    for (std::size_t o = 0; o < dy.cols(); ++o) grad_b(0, o) += dy(t, o);
}

template <typename T>
void add_inplace(Matrix<T>& a, const Matrix<T>& b) {
  require(a.same_shape(b), "add: shape mismatch");
  T* ad = a.data();
  const T* bd = b.data();
  for (std::size_t i = 0; i < a.size(); ++i) ad[i] += bd[i];
}

/// Frame order reversed; an exact involution.
template <typename T>
Matrix<T> transpose(const Matrix<T>& x) {
  Matrix<T> out(x.cols(), x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(j, i) = x(i, j);
  return out;
}

template <typename T>
Matrix<T> reverse_time(const Matrix<T>& x) {
  Matrix<T> y(x.rows(), x.cols());
  for (std::size_t t = 0; t < x.rows(); ++t) {
    auto src = x.row(x.rows() - 1 - t);
    std::copy(src.begin(), src.end(), y.row(t).begin());
  }
  return y;
}

template <typename T>
Matrix<T> concat_features(const Matrix<T>& a, const Matrix<T>& b) {
  require(a.rows() == b.rows(), "concat: frame count mismatch");
  Matrix<T> y(a.rows(), a.cols() + b.cols());
  for (std::size_t t = 0; t < a.rows(); ++t) {
    auto dst = y.row(t);
    std::copy(a.row(t).begin(), a.row(t).end(), dst.begin());
    std::copy(b.row(t).begin(), b.row(t).end(), dst.begin() + a.cols());
  }
  return y;
}

template <typename T>
std::pair<Matrix<T>, Matrix<T>> split_features(const Matrix<T>& y,
                                               std::size_t left) {
  require(left <= y.cols(), "split: column out of range");
  Matrix<T> a(y.rows(), left), b(y.rows(), y.cols() - left);
  for (std::size_t t = 0; t < y.rows(); ++t) {
    auto src = y.row(t);
    std::copy(src.begin(), src.begin() + left, a.row(t).begin());
    std::copy(src.begin() + left, src.end(), b.row(t).begin());
  }
  return {std::move(a), std::move(b)};
}

namespace detail {

// Bitwise select: `mask` is all ones (take a) or zero (take b). Float
// compares block vectorization under the default trapping-math semantics.
inline float select_bits(std::int32_t mask, float a, float b) {
  return std::bit_cast<float>((std::bit_cast<std::int32_t>(a) & mask) |
                              (std::bit_cast<std::int32_t>(b) & ~mask));
}

// Single-precision exp without branches so loops over it vectorize.
// Cody-Waite reduction by ln 2 and a degree-5 polynomial; within a few ulp
// of std::exp on [-87, 88]. Arguments outside that range are clamped to it.
inline float exp_lane(float x) {
  // Sign-magnitude order: as unsigned, x < -87 exactly when the bits exceed
  // those of -87; as signed, x > 88 exactly when they exceed those of 88.
  const std::uint32_t u = std::bit_cast<std::uint32_t>(x);
  x = select_bits(-static_cast<std::int32_t>(u > std::bit_cast<std::uint32_t>(-87.0f)), -87.0f, x);
  x = select_bits(-static_cast<std::int32_t>(std::bit_cast<std::int32_t>(u) >
                                             std::bit_cast<std::int32_t>(88.0f)),
                  88.0f, x);
  const float k = (x * 1.44269504088896341f + 12582912.0f) - 12582912.0f;
  const float r = (x - k * 0.693359375f) - k * -2.12194440e-4f;
  float p = 1.9875691500e-4f;
  p = p * r + 1.3981999507e-3f;
  p = p * r + 8.3334519073e-3f;
  p = p * r + 4.1665795894e-2f;
  p = p * r + 1.6666665459e-1f;
  p = p * r + 5.0000001201e-1f;
  const float y = p * r * r + r + 1.0f;
  return y * std::bit_cast<float>((static_cast<std::int32_t>(k) + 127) << 23);
}

}  // namespace detail

template <typename T>
T sigmoid(T v) {
  if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
  const T e = std::exp(v);
  return e / (T(1) + e);
}

template <>
inline float sigmoid<float>(float v) {
  return 1.0f / (1.0f + detail::exp_lane(-v));
}

template <typename T>
T softplus(T v) {
  // log(1 + e^v) evaluated without overflow.
  return v > T(0) ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
}

// max(v, 0) + log1p(e) with e = exp(-|v|) in (0, 1], using
// log1p(e) = 2 atanh(s), s = e / (2 + e) in (0, 1/3], as an odd series.
template <>
inline float softplus<float>(float v) {
  const float e = detail::exp_lane(-std::fabs(v));
  const float s = e / (2.0f + e);
  const float s2 = s * s;
  float p = 1.0f / 13.0f;
  p = p * s2 + 1.0f / 11.0f;
  p = p * s2 + 1.0f / 9.0f;
  p = p * s2 + 1.0f / 7.0f;
  p = p * s2 + 1.0f / 5.0f;
  p = p * s2 + 1.0f / 3.0f;
  return std::max(v, 0.0f) + 2.0f * s * (1.0f + s2 * p);
}

template <typename T>
T inverse_softplus(T y) {
  return y + std::log(-std::expm1(-y));
}

}  // namespace xmamba
