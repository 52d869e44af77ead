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

#include <cmath>

#include "test_support.hpp"
#include "xmamba/model.hpp"

namespace xmamba {
namespace {

using testing::random_matrix;

ModelConfig small_config(Variant v = Variant::kDua) {
  ModelConfig c;
  c.d_feat = 10;
  c.d_model = 6;
  c.d_inner = 8;
  c.n_state = 4;
  c.n_blocks = 2;
  c.variant = v;
  c.seed = 3;
  return c;
}

TEST(ProjectFeatures, ZeroWeightsGiveBias) {
  Rng rng(1);
  ModelParams<double> p(small_config());
  p.proj_b = random_matrix<double>(rng, 1, 6);
  const auto y = project_features(random_matrix<double>(rng, 5, 10), p);
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(y(t, i), p.proj_b(0, i));
}

TEST(ProjectFeatures, IdentityPassthrough) {
  Rng rng(2);
  auto c = small_config();
  c.d_feat = c.d_model;
  ModelParams<double> p(c);
  for (std::size_t i = 0; i < c.d_model; ++i) p.proj_w(i, i) = 1.0;
  const auto x = random_matrix<double>(rng, 7, c.d_model);
  EXPECT_EQ(project_features(x, p), x);
}

TEST(ProjectFeatures, MatchesNaiveOracle) {
  Rng rng(3);
  auto p = init_params<double>(small_config());
  const auto x = random_matrix<double>(rng, 4, 10);
  const auto y = project_features(x, p);
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t o = 0; o < 6; ++o) {
      double acc = p.proj_b(0, o);
      for (std::size_t i = 0; i < 10; ++i) acc += x(t, i) * p.proj_w(i, o);
      EXPECT_NEAR(y(t, o), acc, 1e-14);
    }
  EXPECT_THROW(project_features(Matrix<double>(4, 9), p), Error);
}

TEST(Predict, ZeroHeadGivesZeroScore) {
  Rng rng(4);
  auto p = init_params<double>(small_config());
  p.head_w.fill(0.0);
  p.head_b.fill(0.0);
  const auto z = predict(random_matrix<double>(rng, 5, 10), p);
  EXPECT_EQ(z.bonafide, 0.0);
  EXPECT_EQ(z.spoof, 0.0);
  EXPECT_EQ(z.score(), 0.0);
}

TEST(Predict, EmptySequenceRejected) {
  auto p = init_params<double>(small_config());
  EXPECT_THROW(predict(Matrix<double>(0, 10), p), Error);
}

TEST(Predict, DeterministicAcrossInitialisations) {
  Rng rng(5);
  const auto x = random_matrix<float>(rng, 9, 10);
  const auto a = predict(x, init_params<float>(small_config()));
  const auto b = predict(x, init_params<float>(small_config()));
  EXPECT_EQ(a.bonafide, b.bonafide);
  EXPECT_EQ(a.spoof, b.spoof);
}

TEST(Predict, ScoreAntisymmetryUnderHeadSwap) {
  Rng rng(6);
  for (Variant v : {Variant::kUnidirectional, Variant::kInn, Variant::kExt, Variant::kDua}) {
    auto p = init_params<double>(small_config(v));
    const auto x = random_matrix<double>(rng, 6, 10);
    const double s = predict(x, p).score();
    for (std::size_t i = 0; i < p.head_w.rows(); ++i) std::swap(p.head_w(i, 0), p.head_w(i, 1));
    std::swap(p.head_b(0, 0), p.head_b(0, 1));
    EXPECT_EQ(predict(x, p).score(), -s) << to_string(v);
  }
}

TEST(Predict, TrunkWidthFollowsVariant) {
  EXPECT_EQ(ModelParams<float>(small_config(Variant::kDua)).head_w.rows(), 12u);
  EXPECT_EQ(ModelParams<float>(small_config(Variant::kExt)).head_w.rows(), 6u);
  EXPECT_EQ(ModelParams<float>(small_config(Variant::kInn)).head_w.rows(), 6u);
}

TEST(Pooling, MeanIsPermutationInvariantAndLinear) {
  Rng rng(7);
  const auto h = random_matrix<double>(rng, 8, 5);
  Matrix<double> perm(8, 5), scaled(8, 5);
  const std::size_t order[] = {3, 0, 7, 1, 6, 2, 5, 4};
  for (std::size_t t = 0; t < 8; ++t)
    for (std::size_t i = 0; i < 5; ++i) {
      perm(t, i) = h(order[t], i);
      scaled(t, i) = 2.5 * h(t, i);
    }
  const auto m = mean_pool(h), mp = mean_pool(perm), ms = mean_pool(scaled);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_NEAR(mp(0, i), m(0, i), 1e-15);
    EXPECT_NEAR(ms(0, i), 2.5 * m(0, i), 1e-14);
  }
  EXPECT_THROW(mean_pool(Matrix<double>(0, 5)), Error);
}

TEST(Pooling, MaxPicksColumnMaxima) {
  Matrix<double> h(3, 2, std::vector<double>{1, -4, 7, -2, 3, -9});
  std::vector<std::size_t> arg;
  const auto m = pool(h, Pooling::kMax, &arg);
  EXPECT_EQ(m(0, 0), 7);
  EXPECT_EQ(m(0, 1), -2);
  EXPECT_EQ(arg, (std::vector<std::size_t>{1, 1}));
}

TEST(Loss, UniformLogitsGiveLn2) {
  const auto r = weighted_ce_loss(Logits<double>{0.0, 0.0}, Label::kSpoof, {});
  EXPECT_DOUBLE_EQ(r.loss, std::log(2.0));
}

TEST(Loss, ConfidentCorrectApproachesZero) {
  const auto r = weighted_ce_loss(Logits<double>{60.0, 0.0}, Label::kBonafide, {});
  EXPECT_GE(r.loss, 0.0);
  EXPECT_LT(r.loss, 1e-20);
  const auto wrong = weighted_ce_loss(Logits<double>{60.0, 0.0}, Label::kSpoof, {});
  EXPECT_NEAR(wrong.loss, 60.0, 1e-12);
}

TEST(Loss, PositiveAndWeighted) {
  Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    const Logits<double> z{rng.uniform(-10, 10), rng.uniform(-10, 10)};
    const ClassWeights w{rng.uniform(0.1, 3.0), rng.uniform(0.1, 3.0)};
    for (Label l : {Label::kBonafide, Label::kSpoof}) {
      const double unweighted = weighted_ce_loss(z, l, {}).loss;
      EXPECT_GT(unweighted, 0.0);
      EXPECT_NEAR(weighted_ce_loss(z, l, w).loss, w[l] * unweighted, 1e-12);
    }
  }
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  Rng rng(9);
  const double h = 1e-5;
  for (int i = 0; i < 50; ++i) {
    const Logits<double> z{rng.uniform(-5, 5), rng.uniform(-5, 5)};
    const ClassWeights w{rng.uniform(0.2, 2.0), rng.uniform(0.2, 2.0)};
    const Label l = i % 2 ? Label::kSpoof : Label::kBonafide;
    const auto r = weighted_ce_loss(z, l, w);
    const double db = (weighted_ce_loss(Logits<double>{z.bonafide + h, z.spoof}, l, w).loss -
                       weighted_ce_loss(Logits<double>{z.bonafide - h, z.spoof}, l, w).loss) /
                      (2 * h);
    const double ds = (weighted_ce_loss(Logits<double>{z.bonafide, z.spoof + h}, l, w).loss -
                       weighted_ce_loss(Logits<double>{z.bonafide, z.spoof - h}, l, w).loss) /
                      (2 * h);
    const double scale = std::max(std::abs(db), std::abs(ds));
    EXPECT_LE(std::abs(r.grad.bonafide - db) / scale, 1e-6);
    EXPECT_LE(std::abs(r.grad.spoof - ds) / scale, 1e-6);
  }
}

TEST(ClassWeightsTest, InverseFrequency) {
  const auto w = inverse_frequency_weights(10, 90);
  EXPECT_DOUBLE_EQ(w.bonafide, 5.0);
  EXPECT_NEAR(w.spoof, 100.0 / 180.0, 1e-15);
  const auto eq = inverse_frequency_weights(7, 7);
  EXPECT_DOUBLE_EQ(eq.bonafide, 1.0);
  EXPECT_DOUBLE_EQ(eq.spoof, 1.0);
  EXPECT_THROW(inverse_frequency_weights(0, 3), Error);
}

class EndToEndGradient : public ::testing::TestWithParam<std::tuple<Variant, Pooling>> {};

TEST_P(EndToEndGradient, TinyModelMatchesFiniteDifferences) {
  const auto [variant, rule] = GetParam();
  ModelConfig c;
  c.d_feat = 5;
  c.d_model = 4;
  c.d_inner = 6;
  c.n_state = 3;
  c.n_blocks = 1;
  c.variant = variant;
  Rng rng(10);
  ModelParams<double> p(c);
  testing::randomize(p, rng);
  const auto x = random_matrix<double>(rng, 6, 5);
  const ClassWeights w{1.3, 0.7};
  auto loss = [&](const ModelParams<double>& q) {
    return weighted_ce_loss(predict(x, q, rule), Label::kSpoof, w).loss;
  };
  ModelCache<double> cache;
  const auto r = weighted_ce_loss(predict(x, p, rule, &cache), Label::kSpoof, w);
  auto grad = zeros_like(p);
  model_backward(r.grad, cache, p, grad, rule);
  const auto rep = testing::check_gradients<ModelParams<double>>(p, grad, loss, 1e-4);
  EXPECT_LE(rep.worst, 1e-5) << rep.worst_tensor;
}

INSTANTIATE_TEST_SUITE_P(
    Variants, EndToEndGradient,
    ::testing::Combine(::testing::Values(Variant::kUnidirectional, Variant::kInn, Variant::kExt,
                                         Variant::kDua),
                       ::testing::Values(Pooling::kMean, Pooling::kMax)));

}  // namespace
}  // namespace xmamba
