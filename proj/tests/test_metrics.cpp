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
#include <sstream>

#include "metrics_oracle.hpp"
#include "xmamba/metrics.hpp"
#include "xmamba/random.hpp"

namespace xmamba {
namespace {

using oracle::brute_det;
using oracle::brute_eer;
using oracle::brute_min_tdcf;
using oracle::random_trials;

std::vector<TrialScore> make(std::vector<double> bona, std::vector<double> spoof) {
  std::vector<TrialScore> t;
  int i = 0;
  for (double s : bona) t.push_back({"b" + std::to_string(i++), s, Label::kBonafide});
  for (double s : spoof) t.push_back({"s" + std::to_string(i++), s, Label::kSpoof});
  return t;
}

TEST(DetPoints, SimpleSeparatedPair) {
  const auto t = make({0.9}, {0.1});
  const auto r = error_rates(t, 0.5);
  EXPECT_EQ(r.p_miss, 0.0);
  EXPECT_EQ(r.p_fa, 0.0);
}

TEST(DetPoints, AllScoresIdentical) {
  const auto pts = det_points(make({1.0, 1.0}, {1.0, 1.0, 1.0}));
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_EQ(pts[0].p_miss, 0.0);
  EXPECT_EQ(pts[0].p_fa, 1.0);
  EXPECT_EQ(pts[1].p_miss, 1.0);
  EXPECT_EQ(pts[1].p_fa, 0.0);
  EXPECT_TRUE(std::isinf(pts[1].threshold));
}

TEST(DetPoints, SingleClassIsDegenerate) {
  EXPECT_THROW(det_points(make({1.0, 2.0}, {})), Error);
  EXPECT_THROW(compute_eer(make({}, {0.3})), Error);
}

TEST(DetPoints, MatchesBruteForceAndIsMonotone) {
  Rng rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    const auto t = random_trials(rng, 50, rep % 3 == 0);
    const auto pts = det_points(t);
    const auto ref = brute_det(t);
    ASSERT_EQ(pts.size(), ref.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      EXPECT_EQ(pts[i].threshold, ref[i].threshold);
      EXPECT_EQ(pts[i].p_miss, ref[i].p_miss);
      EXPECT_EQ(pts[i].p_fa, ref[i].p_fa);
      if (i > 0) {
        EXPECT_GE(pts[i].p_miss, pts[i - 1].p_miss);
        EXPECT_LE(pts[i].p_fa, pts[i - 1].p_fa);
      }
    }
  }
}

TEST(Eer, SeparatedClassesGiveZero) {
  EXPECT_EQ(compute_eer(make({5, 6, 7}, {1, 2, 3, 4})).eer, 0.0);
}

TEST(Eer, HandDerivedSixTrialExample) {
  const auto r = compute_eer(make({3, 2, 1}, {2.5, 0.5, 0.2}));
  EXPECT_DOUBLE_EQ(r.eer, 1.0 / 3.0);
}

TEST(Eer, ChanceLevelScores) {
  Rng rng(2);
  std::vector<TrialScore> t;
  for (int i = 0; i < 20000; ++i)
    t.push_back({std::to_string(i), rng.normal(),
                 rng.uniform() < 0.5 ? Label::kBonafide : Label::kSpoof});
  EXPECT_NEAR(compute_eer(t).eer, 0.5, 0.02);
}

TEST(Eer, InterpolatesBetweenStaircaseSteps) {
  // bona {2, 4}, spoof {1, 3}: the DET passes through (0.5, 0.5) at t = 3.
  EXPECT_DOUBLE_EQ(compute_eer(make({2, 4}, {1, 3})).eer, 0.5);
  // bona {3}, spoof {1, 2, 4}: (0, 1/3) at t = 3 and (1, 1/3) at t = 4, so
  // the curves meet a third of the way along that segment.
  const auto r = compute_eer(make({3}, {1, 2, 4}));
  EXPECT_NEAR(r.eer, 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(r.threshold, 3.0 + 1.0 / 3.0, 1e-15);
}

TEST(Eer, MatchesBruteForceOracle) {
  Rng rng(3);
  for (int rep = 0; rep < 150; ++rep) {
    const std::size_t n = 2 + rng.uniform_int(0, 400);
    const auto t = random_trials(rng, n, rep % 4 == 0);
    EXPECT_NEAR(compute_eer(t).eer, brute_eer(t), 1e-12);
  }
}

TEST(Eer, MonotoneTransformInvariance) {
  Rng rng(4);
  for (int rep = 0; rep < 50; ++rep) {
    auto t = random_trials(rng, 100, rep % 2 == 0);
    const double e0 = compute_eer(t).eer;
    const double d0 = min_tdcf(t, {}).min_tdcf;
    for (auto& x : t) x.score = std::atan(x.score) * 7.0 + 0.25;
    EXPECT_EQ(compute_eer(t).eer, e0);
    EXPECT_EQ(min_tdcf(t, {}).min_tdcf, d0);
  }
}

TEST(Eer, NegationReflects) {
  Rng rng(5);
  for (int rep = 0; rep < 30; ++rep) {
    auto t = random_trials(rng, 80, false);
    const double e = compute_eer(t).eer;
    for (auto& x : t) x.score = -x.score;
    const double en = compute_eer(t).eer;
    EXPECT_LE(std::min(e, en), 0.5 + 1e-12);
  }
}

TEST(Eer, AddingCorrectExtremeNeverHurts) {
  Rng rng(6);
  for (int rep = 0; rep < 50; ++rep) {
    auto t = random_trials(rng, 60, rep % 2 == 0);
    const double e = compute_eer(t).eer;
    auto hi = t;
    hi.push_back({"top", 1e9, Label::kBonafide});
    auto lo = t;
    lo.push_back({"bottom", -1e9, Label::kSpoof});
    EXPECT_LE(compute_eer(hi).eer, e + 1e-12);
    EXPECT_LE(compute_eer(lo).eer, e + 1e-12);
  }
}

TEST(Tdcf, PerfectCountermeasure) {
  const TdcfCostModel m;
  const auto k = m.coefficients();
  const auto r = min_tdcf(make({5, 6}, {1, 2, 3}), m);
  EXPECT_NEAR(r.min_tdcf, k.c0 / std::min(k.c0 + k.c1, k.c0 + k.c2), 1e-15);
}

TEST(Tdcf, ConstantScoresCostExactlyOne) {
  EXPECT_DOUBLE_EQ(min_tdcf(make({0.3, 0.3}, {0.3, 0.3, 0.3}), {}).min_tdcf, 1.0);
}

TEST(Tdcf, MatchesBruteForceAndStaysInUnitInterval) {
  Rng rng(7);
  for (int rep = 0; rep < 150; ++rep) {
    TdcfCostModel m;
    if (rep % 2) {
      m.asv_p_miss = rng.uniform(0.0, 0.2);
      m.asv_p_fa = rng.uniform(0.0, 0.2);
      m.asv_p_spoof_fa = rng.uniform(0.05, 1.0);
    }
    const auto t = random_trials(rng, 2 + rng.uniform_int(0, 300), rep % 3 == 0);
    const double v = min_tdcf(t, m).min_tdcf;
    EXPECT_NEAR(v, brute_min_tdcf(t, m), 1e-12);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0 + 1e-15);
  }
}

TEST(Tdcf, InvalidCostModels) {
  TdcfCostModel m;
  m.p_target = 0.5;
  EXPECT_THROW(m.validate(), Error);
  TdcfCostModel z;
  z.asv_p_spoof_fa = 0.0;
  EXPECT_THROW(z.validate(), Error);
  TdcfCostModel big;
  big.asv_p_miss = 1.0;
  big.asv_p_fa = 1.0;
  EXPECT_THROW(big.validate(), Error);
}

TEST(ScoreFiles, JoinWellFormed) {
  std::istringstream s("u1 0.5\nu2 -1.25\n\n# comment\nu3 3e-2\n");
  std::istringstream p("u1 bonafide\nu2 spoof\nu3 spoof\n");
  const auto j = join_trials(read_scores(s), read_protocol(p));
  ASSERT_EQ(j.trials.size(), 3u);
  EXPECT_EQ(j.trials[1].utt_id, "u2");
  EXPECT_EQ(j.trials[1].score, -1.25);
  EXPECT_EQ(*j.trials[2].label, Label::kSpoof);
  EXPECT_TRUE(j.unmatched_scores.empty());
  EXPECT_TRUE(j.unmatched_protocol.empty());
}

TEST(ScoreFiles, UnmatchedReported) {
  std::istringstream s("u1 0.5\nghost 0.1\n");
  std::istringstream p("u1 bonafide\nu9 spoof\n");
  const auto j = join_trials(read_scores(s), read_protocol(p));
  EXPECT_EQ(j.trials.size(), 1u);
  EXPECT_EQ(j.unmatched_scores, std::vector<std::string>{"ghost"});
  EXPECT_EQ(j.unmatched_protocol, std::vector<std::string>{"u9"});
}

TEST(ScoreFiles, ErrorsNameLineAndId) {
  std::istringstream dup("a 1\nb 2\na 3\n");
  try {
    read_scores(dup, "s.txt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("'a'"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("s.txt:3"), std::string::npos);
  }
  std::istringstream bad("a 1\nb oops\n");
  try {
    read_scores(bad, "s.txt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("s.txt:2"), std::string::npos);
  }
  std::istringstream badlabel("a maybe\n");
  EXPECT_THROW(read_protocol(badlabel), Error);
  std::istringstream dupp("a spoof\na bonafide\n");
  EXPECT_THROW(read_protocol(dupp), Error);
}

TEST(ScoreFiles, AsvspoofProtocolLayout) {
  std::istringstream p("LA_0039 LA_E_2834763 - A11 spoof\nLA_0014 LA_E_8877452 - - bonafide\n");
  const auto m = read_protocol(p);
  EXPECT_EQ(m.at("LA_E_2834763"), Label::kSpoof);
  EXPECT_EQ(m.at("LA_E_8877452"), Label::kBonafide);
}

}  // namespace
}  // namespace xmamba
