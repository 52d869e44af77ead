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

// Bidirectional wirings over Mamba blocks.
//
//   inn: one norm/in_proj/out_proj pair shared by a forward and a backward
//        conv+SSM branch; branch outputs are summed before the gate.
//   ext: two residual-free Mamba blocks on x and reverse(x), summed, plus one
//        residual around the pair.
//   dua: two full stacks (columns), one on x and one on reverse(x); outputs
//        concatenated, forward features first.

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "xmamba/mamba_block.hpp"
#include "xmamba/param_tree.hpp"

namespace xmamba {

enum class Variant { kUnidirectional, kInn, kExt, kDua };

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::kUnidirectional: return "unidirectional";
    case Variant::kInn: return "inn";
    case Variant::kExt: return "ext";
    case Variant::kDua: return "dua";
  }
  return "?";
}

inline Variant parse_variant(std::string_view s) {
  if (s == "unidirectional" || s == "uni") return Variant::kUnidirectional;
  if (s == "inn") return Variant::kInn;
  if (s == "ext") return Variant::kExt;
  if (s == "dua") return Variant::kDua;
  throw Error("unknown variant '" + std::string(s) + "'", ErrorKind::kUsage);
}

// ---------------------------------------------------------------------------
// InnBiMamba block.

template <typename T>
struct InnBlockParams {
  LayerNormParams<T> norm;
  Matrix<T> in_proj;  // [d_model x 2 d_inner]
  BranchParams<T> forward_branch;
  BranchParams<T> backward_branch;
  Matrix<T> out_proj;  // [d_inner x d_model]

  InnBlockParams() = default;
  explicit InnBlockParams(const BlockShape& s)
      : norm(s.d_model),
        in_proj(s.d_model, 2 * s.d_inner),
        forward_branch(s.d_inner, s.n_state, s.k_conv),
        backward_branch(s.d_inner, s.n_state, s.k_conv),
        out_proj(s.d_inner, s.d_model) {}

  std::size_t d_model() const noexcept { return in_proj.rows(); }
  std::size_t d_inner() const noexcept { return out_proj.rows(); }

  template <typename F>
  void for_each_tensor(F&& f) {
    norm.for_each_tensor(prefixed("norm.", f));
    f("in_proj", in_proj);
    forward_branch.for_each_tensor(prefixed("fwd.", f));
    backward_branch.for_each_tensor(prefixed("bwd.", f));
    f("out_proj", out_proj);
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    norm.for_each_tensor(prefixed("norm.", f));
    f("in_proj", in_proj);
    forward_branch.for_each_tensor(prefixed("fwd.", f));
    backward_branch.for_each_tensor(prefixed("bwd.", f));
    f("out_proj", out_proj);
  }

  void initialize(Rng& rng) {
    fill_uniform(in_proj, rng, 1.0 / std::sqrt(double(in_proj.rows())));
    forward_branch.initialize(rng);
    backward_branch.initialize(rng);
    fill_uniform(out_proj, rng, 1.0 / std::sqrt(double(out_proj.rows())));
  }
};

template <typename T>
struct InnBlockCache {
  LayerNormCache<T> norm;
  Matrix<T> normed;
  Matrix<T> gate;
  BranchCache<T> forward_branch;
  BranchCache<T> backward_branch;
  Matrix<T> ssm_sum;
  Matrix<T> gated;
};

template <typename T>
Matrix<T> inn_bimamba_forward(const Matrix<T>& x, const InnBlockParams<T>& p,
                              std::type_identity_t<InnBlockCache<T>>* cache = nullptr,
                              ScanAlgorithm algo = ScanAlgorithm::kSequential) {
  detail::check_block_input(x, p.d_model());
  Matrix<T> normed = layer_norm_forward(x, p.norm, cache ? &cache->norm : nullptr);
  auto [u, g] = split_features(matmul(normed, p.in_proj), p.d_inner());
  Matrix<T> y = branch_forward(u, p.forward_branch,
                               cache ? &cache->forward_branch : nullptr, algo);
  const Matrix<T> yb = reverse_time(branch_forward(
      reverse_time(u), p.backward_branch, cache ? &cache->backward_branch : nullptr,
      algo));
  add_inplace(y, yb);
  Matrix<T> z = detail::apply_gate(y, g);
  Matrix<T> out = matmul(z, p.out_proj);
  add_inplace(out, x);
  if (cache != nullptr) {
    cache->normed = std::move(normed);
    cache->gate = std::move(g);
    cache->ssm_sum = std::move(y);
    cache->gated = std::move(z);
  }
  return out;
}

template <typename T>
Matrix<T> inn_bimamba_backward(const Matrix<T>& dout, const InnBlockCache<T>& c,
                               const InnBlockParams<T>& p, InnBlockParams<T>& grad) {
  accumulate_xt_dy(c.gated, dout, grad.out_proj);
  const Matrix<T> dz = matmul_dy_wt(dout, p.out_proj);
  Matrix<T> dy, dg;
  detail::gate_backward(dz, c.ssm_sum, c.gate, dy, dg);
  Matrix<T> du = branch_backward(dy, c.forward_branch, p.forward_branch,
                                 grad.forward_branch);
  add_inplace(du, reverse_time(branch_backward(reverse_time(dy), c.backward_branch,
                                               p.backward_branch,
                                               grad.backward_branch)));
  const Matrix<T> dproj = concat_features(du, dg);
  accumulate_xt_dy(c.normed, dproj, grad.in_proj);
  Matrix<T> dx =
      layer_norm_backward(matmul_dy_wt(dproj, p.in_proj), c.norm, p.norm, grad.norm);
  add_inplace(dx, dout);
  return dx;
}

// ---------------------------------------------------------------------------
// ExtBiMamba block.

template <typename T>
struct ExtBlockParams {
  MambaBlockParams<T> forward_block;
  MambaBlockParams<T> backward_block;

  ExtBlockParams() = default;
  explicit ExtBlockParams(const BlockShape& s) : forward_block(s), backward_block(s) {}

  std::size_t d_model() const noexcept { return forward_block.d_model(); }

  template <typename F>
  void for_each_tensor(F&& f) {
    forward_block.for_each_tensor(prefixed("fwd.", f));
    backward_block.for_each_tensor(prefixed("bwd.", f));
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    forward_block.for_each_tensor(prefixed("fwd.", f));
    backward_block.for_each_tensor(prefixed("bwd.", f));
  }

  void initialize(Rng& rng) {
    forward_block.initialize(rng);
    backward_block.initialize(rng);
  }
};

template <typename T>
struct ExtBlockCache {
  BlockActivationCache<T> forward_block;
  BlockActivationCache<T> backward_block;
};

template <typename T>
Matrix<T> ext_bimamba_forward(const Matrix<T>& x, const ExtBlockParams<T>& p,
                              std::type_identity_t<ExtBlockCache<T>>* cache = nullptr,
                              ScanAlgorithm algo = ScanAlgorithm::kSequential) {
  Matrix<T> y = mamba_block_forward(x, p.forward_block,
                                    cache ? &cache->forward_block : nullptr,
                                    /*residual=*/false, algo);
  add_inplace(y, reverse_time(mamba_block_forward(
                     reverse_time(x), p.backward_block,
                     cache ? &cache->backward_block : nullptr, false, algo)));
  add_inplace(y, x);
  return y;
}

template <typename T>
Matrix<T> ext_bimamba_backward(const Matrix<T>& dout, const ExtBlockCache<T>& c,
                               const ExtBlockParams<T>& p, ExtBlockParams<T>& grad) {
  Matrix<T> dx = mamba_block_backward(dout, c.forward_block, p.forward_block,
                                      grad.forward_block, false);
  add_inplace(dx, reverse_time(mamba_block_backward(reverse_time(dout),
                                                    c.backward_block, p.backward_block,
                                                    grad.backward_block, false)));
  add_inplace(dx, dout);
  return dx;
}

// ---------------------------------------------------------------------------
// Stacks.

template <typename T>
struct UniStack {
  std::vector<MambaBlockParams<T>> blocks;
};

template <typename T>
struct InnStack {
  std::vector<InnBlockParams<T>> blocks;
};

template <typename T>
struct ExtStack {
  std::vector<ExtBlockParams<T>> blocks;
};

/// Two independently parameterized columns of full residual Mamba blocks.
template <typename T>
struct DuaColumns {
  std::vector<MambaBlockParams<T>> forward_column;
  std::vector<MambaBlockParams<T>> backward_column;
};

template <typename T>
struct TrunkParams {
  std::variant<UniStack<T>, InnStack<T>, ExtStack<T>, DuaColumns<T>> stack;

  TrunkParams() = default;
  TrunkParams(Variant v, std::size_t n_blocks, const BlockShape& s) {
    require(n_blocks >= 1, "trunk: n_blocks must be >= 1", ErrorKind::kUsage);
    switch (v) {
      case Variant::kUnidirectional:
        stack = UniStack<T>{std::vector<MambaBlockParams<T>>(n_blocks, MambaBlockParams<T>(s))};
        break;
      case Variant::kInn:
        stack = InnStack<T>{std::vector<InnBlockParams<T>>(n_blocks, InnBlockParams<T>(s))};
        break;
      case Variant::kExt:
        stack = ExtStack<T>{std::vector<ExtBlockParams<T>>(n_blocks, ExtBlockParams<T>(s))};
        break;
      case Variant::kDua:
        stack = DuaColumns<T>{
            std::vector<MambaBlockParams<T>>(n_blocks, MambaBlockParams<T>(s)),
            std::vector<MambaBlockParams<T>>(n_blocks, MambaBlockParams<T>(s))};
        break;
    }
  }

  Variant variant() const noexcept { return static_cast<Variant>(stack.index()); }

  /// Output feature width for a d_model-wide input.
  std::size_t output_width(std::size_t d_model) const noexcept {
    return variant() == Variant::kDua ? 2 * d_model : d_model;
  }

  template <typename F>
  void for_each_tensor(F&& f) {
    visit_blocks(*this, f);
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    visit_blocks(*this, f);
  }

  void initialize(Rng& rng) {
    std::visit(
        [&](auto& s) {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, DuaColumns<T>>) {
            for (auto& b : s.forward_column) b.initialize(rng);
            for (auto& b : s.backward_column) b.initialize(rng);
          } else {
            for (auto& b : s.blocks) b.initialize(rng);
          }
        },
        stack);
  }

 private:
  template <typename Self, typename F>
  static void visit_blocks(Self& self, F& f) {
    std::visit(
        [&](auto& s) {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, DuaColumns<T>>) {
            for (std::size_t i = 0; i < s.forward_column.size(); ++i)
              s.forward_column[i].for_each_tensor(
                  prefixed("fwd_col." + std::to_string(i) + ".", f));
            for (std::size_t i = 0; i < s.backward_column.size(); ++i)
              s.backward_column[i].for_each_tensor(
                  prefixed("bwd_col." + std::to_string(i) + ".", f));
          } else {
            for (std::size_t i = 0; i < s.blocks.size(); ++i)
              s.blocks[i].for_each_tensor(prefixed("block." + std::to_string(i) + ".", f));
          }
        },
        self.stack);
  }
};

template <typename T>
struct TrunkCache {
  std::vector<BlockActivationCache<T>> uni;  // uni blocks or dua forward column
  std::vector<BlockActivationCache<T>> backward_column;
  std::vector<InnBlockCache<T>> inn;
  std::vector<ExtBlockCache<T>> ext;
};

namespace detail {
template <typename T>
Matrix<T> column_forward(Matrix<T> x, const std::vector<MambaBlockParams<T>>& blocks,
                         std::vector<BlockActivationCache<T>>* caches,
                         ScanAlgorithm algo) {
  if (caches != nullptr) caches->assign(blocks.size(), {});
  for (std::size_t i = 0; i < blocks.size(); ++i)
    x = mamba_block_forward(x, blocks[i], caches ? &(*caches)[i] : nullptr, true, algo);
  return x;
}

template <typename T>
Matrix<T> column_backward(Matrix<T> dy, const std::vector<MambaBlockParams<T>>& blocks,
                          const std::vector<BlockActivationCache<T>>& caches,
                          std::vector<MambaBlockParams<T>>& grads) {
  for (std::size_t i = blocks.size(); i-- > 0;)
    dy = mamba_block_backward(dy, caches[i], blocks[i], grads[i], true);
  return dy;
}
}  // namespace detail

/// Forward column on x, backward column on reverse(x), concatenated.
template <typename T>
Matrix<T> dua_bimamba_forward(const Matrix<T>& x, const DuaColumns<T>& cols,
                              std::type_identity_t<TrunkCache<T>>* cache = nullptr,
                              ScanAlgorithm algo = ScanAlgorithm::kSequential) {
  require(cols.forward_column.size() == cols.backward_column.size(),
          "dua: column depth mismatch");
  require(!cols.forward_column.empty(), "dua: empty columns");
  const Matrix<T> f =
      detail::column_forward(x, cols.forward_column, cache ? &cache->uni : nullptr, algo);
  const Matrix<T> b = reverse_time(detail::column_forward(
      reverse_time(x), cols.backward_column,
      cache ? &cache->backward_column : nullptr, algo));
  return concat_features(f, b);
}

/// Runs the whole trunk. Output width is d_model, or 2 d_model for dua.
template <typename T>
Matrix<T> stack_forward(const Matrix<T>& x, const TrunkParams<T>& trunk,
                        std::type_identity_t<TrunkCache<T>>* cache = nullptr,
                        ScanAlgorithm algo = ScanAlgorithm::kSequential) {
  return std::visit(
      [&](const auto& s) -> Matrix<T> {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, DuaColumns<T>>) {
          return dua_bimamba_forward(x, s, cache, algo);
        } else {
          require(!s.blocks.empty(), "trunk: empty stack");
          Matrix<T> h = x;
          if constexpr (std::is_same_v<S, UniStack<T>>) {
            return detail::column_forward(h, s.blocks, cache ? &cache->uni : nullptr, algo);
          } else if constexpr (std::is_same_v<S, InnStack<T>>) {
            if (cache) cache->inn.assign(s.blocks.size(), {});
            for (std::size_t i = 0; i < s.blocks.size(); ++i)
              h = inn_bimamba_forward(h, s.blocks[i], cache ? &cache->inn[i] : nullptr, algo);
            return h;
          } else {
            if (cache) cache->ext.assign(s.blocks.size(), {});
            for (std::size_t i = 0; i < s.blocks.size(); ++i)
              h = ext_bimamba_forward(h, s.blocks[i], cache ? &cache->ext[i] : nullptr, algo);
            return h;
          }
        }
      },
      trunk.stack);
}

/// Backward of stack_forward; `grad` must have the same structure as `trunk`.
template <typename T>
Matrix<T> stack_backward(const Matrix<T>& dy, const TrunkCache<T>& cache,
                         const TrunkParams<T>& trunk, TrunkParams<T>& grad) {
  require(grad.stack.index() == trunk.stack.index(), "trunk: gradient variant mismatch");
  return std::visit(
      [&](const auto& s) -> Matrix<T> {
        using S = std::decay_t<decltype(s)>;
        auto& g = std::get<S>(grad.stack);
        if constexpr (std::is_same_v<S, DuaColumns<T>>) {
          const std::size_t dm = s.forward_column.front().d_model();
          auto [df, db] = split_features(dy, dm);
          Matrix<T> dx =
              detail::column_backward(df, s.forward_column, cache.uni, g.forward_column);
          add_inplace(dx, reverse_time(detail::column_backward(
                              reverse_time(db), s.backward_column,
                              cache.backward_column, g.backward_column)));
          return dx;
        } else if constexpr (std::is_same_v<S, UniStack<T>>) {
          return detail::column_backward(dy, s.blocks, cache.uni, g.blocks);
        } else if constexpr (std::is_same_v<S, InnStack<T>>) {
          Matrix<T> d = dy;
          for (std::size_t i = s.blocks.size(); i-- > 0;)
            d = inn_bimamba_backward(d, cache.inn[i], s.blocks[i], g.blocks[i]);
          return d;
        } else {
          Matrix<T> d = dy;
          for (std::size_t i = s.blocks.size(); i-- > 0;)
            d = ext_bimamba_backward(d, cache.ext[i], s.blocks[i], g.blocks[i]);
          return d;
        }
      },
      trunk.stack);
}

/// Exchanges forward and backward submodules (branches, blocks or columns).
/// For every bidirectional variant,
///   stack_forward(reverse(x), swap_directions(p)) == reverse(stack_forward(x, p)).
template <typename T>
TrunkParams<T> swap_directions(TrunkParams<T> p) {
  std::visit(
      [](auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, DuaColumns<T>>) {
          std::swap(s.forward_column, s.backward_column);
        } else if constexpr (std::is_same_v<S, InnStack<T>>) {
          for (auto& b : s.blocks) std::swap(b.forward_branch, b.backward_branch);
        } else if constexpr (std::is_same_v<S, ExtStack<T>>) {
          for (auto& b : s.blocks) std::swap(b.forward_block, b.backward_block);
        }
      },
      p.stack);
  return p;
}

/// Exact parameter counts.
inline std::size_t branch_parameter_count(const BlockShape& s) {
  return s.d_inner * s.k_conv + s.d_inner +
         3 * s.d_inner * s.n_state + s.d_inner * s.d_inner + s.d_inner;
}

inline std::size_t block_parameter_count(const BlockShape& s) {
  return 2 * s.d_model + 2 * s.d_model * s.d_inner + branch_parameter_count(s) +
         s.d_inner * s.d_model;
}

inline std::size_t trunk_parameter_count(Variant v, std::size_t n_blocks,
                                         const BlockShape& s) {
  switch (v) {
    case Variant::kUnidirectional: return n_blocks * block_parameter_count(s);
    case Variant::kInn:
      return n_blocks * (block_parameter_count(s) + branch_parameter_count(s));
    case Variant::kExt:
    case Variant::kDua: return 2 * n_blocks * block_parameter_count(s);
  }
  return 0;
}

}  // namespace xmamba
