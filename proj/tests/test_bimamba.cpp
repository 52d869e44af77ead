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

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "xmamba/bimamba.hpp"

namespace xmamba {
namespace {

using testing::check_gradients;
using testing::random_matrix;
using testing::relative_deviation;

const BlockShape kShape{4, 8, 4, 3};

constexpr Variant kBidirectional[] = {Variant::kInn, Variant::kExt, Variant::kDua};
constexpr Variant kAll[] = {Variant::kUnidirectional, Variant::kInn, Variant::kExt,
                            Variant::kDua};

TEST(ReverseTime, Examples) {
  Matrix<double> x(3, 2, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(reverse_time(x), Matrix<double>(3, 2, {5, 6, 3, 4, 1, 2}));
  Matrix<double> one(1, 3, {7, 8, 9});
  EXPECT_EQ(reverse_time(one), one);
  Rng rng(1);
  const auto r = random_matrix<float>(rng, 13, 5);
  EXPECT_EQ(reverse_time(reverse_time(r)), r);
}

TEST(InnBiMamba, ZeroBranchesAreIdentity) {
  Rng rng(2);
  InnBlockParams<double> p(kShape);
  p.initialize(rng);
  p.forward_branch = BranchParams<double>(kShape.d_inner, kShape.n_state, kShape.k_conv);
  p.backward_branch = p.forward_branch;
  const auto x = random_matrix<double>(rng, 7, 4);
  EXPECT_EQ(inn_bimamba_forward(x, p), x);
}

TEST(InnBiMamba, PalindromeWithMirroredBranches) {
  Rng rng(3);
  InnBlockParams<double> p(kShape);
  testing::randomize(p, rng);
  p.backward_branch = p.forward_branch;
  auto x = random_matrix<double>(rng, 9, 4);
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t i = 0; i < 4; ++i) x(8 - t, i) = x(t, i);
  ASSERT_EQ(x, reverse_time(x));
  const auto y = inn_bimamba_forward(x, p);
  EXPECT_EQ(y, reverse_time(y));
  EXPECT_NE(y, x);
}

TEST(InnBiMamba, ShapeAndFinite) {
  Rng rng(4);
  InnBlockParams<float> p(kShape);
  p.initialize(rng);
  const auto y = inn_bimamba_forward(random_matrix<float>(rng, 11, 4), p);
  EXPECT_EQ(y.rows(), 11u);
  EXPECT_EQ(y.cols(), 4u);
  EXPECT_TRUE(all_finite(y));
  EXPECT_THROW(inn_bimamba_forward(Matrix<float>(3, 5), p), Error);
}

TEST(ExtBiMamba, ZeroModulesAreIdentity) {
  Rng rng(5);
  const ExtBlockParams<double> p(kShape);
  const auto x = random_matrix<double>(rng, 6, 4);
  EXPECT_EQ(ext_bimamba_forward(x, p), x);
}

TEST(ExtBiMamba, ZeroBackwardEqualsUnidirectionalBlock) {
  Rng rng(6);
  ExtBlockParams<double> p(kShape);
  testing::randomize(p.forward_block, rng);
  const auto x = random_matrix<double>(rng, 10, 4);
  EXPECT_EQ(ext_bimamba_forward(x, p), mamba_block_forward(x, p.forward_block));
}

TEST(DuaBiMamba, ZeroColumnsConcatInput) {
  Rng rng(7);
  const TrunkParams<double> t(Variant::kDua, 2, kShape);
  const auto x = random_matrix<double>(rng, 7, 4);
  EXPECT_EQ(stack_forward(x, t), concat_features(x, x));
}

TEST(DuaBiMamba, BackwardHalfIsReversedColumnOfReversedInput) {
  Rng rng(8);
  TrunkParams<double> t(Variant::kDua, 2, kShape);
  testing::randomize(t, rng);
  const auto x = random_matrix<double>(rng, 7, 4);
  const auto y = stack_forward(x, t);
  const auto& cols = std::get<DuaColumns<double>>(t.stack);
  Matrix<double> f = x, b = reverse_time(x);
  for (const auto& blk : cols.forward_column) f = mamba_block_forward(f, blk);
  for (const auto& blk : cols.backward_column) b = mamba_block_forward(b, blk);
  EXPECT_EQ(y, concat_features(f, reverse_time(b)));
}

TEST(DuaBiMamba, ShapeAndDepthMismatch) {
  Rng rng(9);
  TrunkParams<float> t(Variant::kDua, 2, kShape);
  t.initialize(rng);
  const auto y = stack_forward(random_matrix<float>(rng, 7, 4), t);
  EXPECT_EQ(y.rows(), 7u);
  EXPECT_EQ(y.cols(), 8u);
  EXPECT_TRUE(all_finite(y));
  auto& cols = std::get<DuaColumns<float>>(t.stack);
  cols.backward_column.pop_back();
  EXPECT_THROW(stack_forward(Matrix<float>(3, 4), t), Error);
}

TEST(Stack, SingleBlockEqualsBlockOp) {
  Rng rng(10);
  const auto x = random_matrix<double>(rng, 8, 4);
  TrunkParams<double> uni(Variant::kUnidirectional, 1, kShape);
  testing::randomize(uni, rng);
  EXPECT_EQ(stack_forward(x, uni),
            mamba_block_forward(x, std::get<UniStack<double>>(uni.stack).blocks[0]));
  TrunkParams<double> inn(Variant::kInn, 1, kShape);
  testing::randomize(inn, rng);
  EXPECT_EQ(stack_forward(x, inn),
            inn_bimamba_forward(x, std::get<InnStack<double>>(inn.stack).blocks[0]));
  TrunkParams<double> ext(Variant::kExt, 1, kShape);
  testing::randomize(ext, rng);
  EXPECT_EQ(stack_forward(x, ext),
            ext_bimamba_forward(x, std::get<ExtStack<double>>(ext.stack).blocks[0]));
}

TEST(Stack, AllZeroDegeneracies) {
  Rng rng(11);
  const auto x = random_matrix<double>(rng, 5, 4);
  for (Variant v : kAll) {
    const TrunkParams<double> t(v, 3, kShape);
    const auto expect = v == Variant::kDua ? concat_features(x, x) : x;
    EXPECT_EQ(stack_forward(x, t), expect) << to_string(v);
  }
}

TEST(Stack, DeepStackStaysFinite) {
  Rng rng(12);
  const BlockShape shape{16, 32, 16, 3};
  for (Variant v : kAll) {
    TrunkParams<float> t(v, 12, shape);
    t.initialize(rng);
    const auto y = stack_forward(random_matrix<float>(rng, 50, 16), t);
    EXPECT_TRUE(all_finite(y)) << to_string(v);
    EXPECT_EQ(y.cols(), t.output_width(16));
  }
}

TEST(Stack, EmptyStackRejected) {
  EXPECT_THROW(TrunkParams<float>(Variant::kInn, 0, kShape), Error);
  TrunkParams<float> t;
  t.stack = InnStack<float>{};
  EXPECT_THROW(stack_forward(Matrix<float>(3, 4), t), Error);
}

TEST(Stack, ReversalConjugation) {
  Rng rng(13);
  for (Variant v : kBidirectional) {
    TrunkParams<double> t(v, 2, kShape);
    testing::randomize(t, rng);
    const auto x = random_matrix<double>(rng, 11, 4);
    const auto lhs = stack_forward(reverse_time(x), swap_directions(t));
    const auto rhs = reverse_time(stack_forward(x, t));
    if (v == Variant::kDua) {
      // Columns are swapped wholesale, so the halves trade places exactly.
      const std::size_t d = 4;
      auto [lf, lb] = split_features(lhs, d);
      auto [rf, rb] = split_features(rhs, d);
      EXPECT_EQ(lf, rb);
      EXPECT_EQ(lb, rf);
    } else {
      EXPECT_LE(relative_deviation(lhs.values(), rhs.values()), 1e-12) << to_string(v);
    }
  }
}

TEST(Stack, ExtWithoutBackwardPathwaysIsUnidirectionalStack) {
  Rng rng(14);
  TrunkParams<double> ext(Variant::kExt, 3, kShape);
  TrunkParams<double> uni(Variant::kUnidirectional, 3, kShape);
  auto& eb = std::get<ExtStack<double>>(ext.stack).blocks;
  auto& ub = std::get<UniStack<double>>(uni.stack).blocks;
  for (std::size_t i = 0; i < 3; ++i) {
    testing::randomize(eb[i].forward_block, rng);
    ub[i] = eb[i].forward_block;
  }
  const auto x = random_matrix<double>(rng, 9, 4);
  EXPECT_EQ(stack_forward(x, ext), stack_forward(x, uni));
}

TEST(Stack, ParameterCounts) {
  const BlockShape s{6, 10, 5, 3};
  // Hand count for one block: norm 12, in_proj 120, conv 30 + 10,
  // ssm 3*50 + 100 + 10, out_proj 60.
  EXPECT_EQ(block_parameter_count(s), 12u + 120u + 40u + 260u + 60u);
  const std::size_t uni = parameter_count(TrunkParams<float>(Variant::kUnidirectional, 4, s));
  const std::size_t inn = parameter_count(TrunkParams<float>(Variant::kInn, 4, s));
  const std::size_t ext = parameter_count(TrunkParams<float>(Variant::kExt, 4, s));
  const std::size_t dua = parameter_count(TrunkParams<float>(Variant::kDua, 4, s));
  for (Variant v : kAll)
    EXPECT_EQ(parameter_count(TrunkParams<float>(v, 4, s)), trunk_parameter_count(v, 4, s));
  EXPECT_EQ(ext, 2 * uni);
  EXPECT_LT(inn, ext);
  EXPECT_GT(inn, uni);
  EXPECT_EQ(dua, 2 * uni);
}

struct TrunkAndInput {
  TrunkParams<double> trunk;
  Matrix<double> x;
  template <typename F>
  void for_each_tensor(F&& f) {
    trunk.for_each_tensor(f);
    f("x", x);
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    trunk.for_each_tensor(f);
    f("x", x);
  }
};

class TrunkGradient : public ::testing::TestWithParam<Variant> {};

TEST_P(TrunkGradient, MatchesFiniteDifferences) {
  Rng rng(15);
  const Variant v = GetParam();
  const std::size_t T = 10;
  TrunkAndInput in{TrunkParams<double>(v, 2, kShape), random_matrix<double>(rng, T, 4)};
  testing::randomize(in.trunk, rng);
  const auto r = random_matrix<double>(rng, T, in.trunk.output_width(4));
  auto loss = [&](const TrunkAndInput& p) { return testing::dot(r, stack_forward(p.x, p.trunk)); };
  TrunkCache<double> cache;
  stack_forward(in.x, in.trunk, &cache);
  TrunkAndInput grad{zeros_like(in.trunk), {}};
  grad.x = stack_backward(r, cache, in.trunk, grad.trunk);
  const auto rep = check_gradients<TrunkAndInput>(in, grad, loss);
  EXPECT_LE(rep.worst, 1e-6) << rep.worst_tensor;
}

INSTANTIATE_TEST_SUITE_P(AllVariants, TrunkGradient, ::testing::ValuesIn(kAll),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(Variant, ParseRoundTrip) {
  for (Variant v : kAll) EXPECT_EQ(parse_variant(to_string(v)), v);
  EXPECT_THROW(parse_variant("bogus"), Error);
}

}  // namespace
}  // namespace xmamba
