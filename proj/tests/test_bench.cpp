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

#include <filesystem>
#include <sstream>

#include "test_support.hpp"
#include "xmamba/bench.hpp"

namespace xmamba {
namespace {

using testing::random_matrix;

// Textbook attention written out with explicit sums.
Matrix<double> naive_attention(const Matrix<double>& x, const AttentionParams<double>& p) {
  const std::size_t L = x.rows(), D = x.cols();
  auto proj = [&](const Matrix<double>& w) {
    Matrix<double> out(L, D);
    for (std::size_t t = 0; t < L; ++t)
      for (std::size_t j = 0; j < D; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < D; ++i) s += x(t, i) * w(i, j);
        out(t, j) = s;
      }
    return out;
  };
  const Matrix<double> q = proj(p.wq), k = proj(p.wk), v = proj(p.wv);
  Matrix<double> out(L, D);
  for (std::size_t i = 0; i < L; ++i) {
    std::vector<double> e(L);
    double z = 0.0;
    for (std::size_t j = 0; j < L; ++j) {
      double s = 0.0;
      for (std::size_t d = 0; d < D; ++d) s += q(i, d) * k(j, d);
      e[j] = std::exp(s / std::sqrt(double(D)));
      z += e[j];
    }
    for (std::size_t j = 0; j < L; ++j)
      for (std::size_t d = 0; d < D; ++d) out(i, d) += e[j] / z * v(j, d);
  }
  return out;
}

TEST(Attention, MatchesNaiveOracle) {
  Rng rng(3);
  for (std::size_t L : {1u, 2u, 7u, 33u}) {
    const auto p = init_attention<double>(8, 11 + L);
    const Matrix<double> x = random_matrix<double>(rng, L, 8);
    const Matrix<double> got = attention_reference_forward(x, p);
    const Matrix<double> want = naive_attention(x, p);
    EXPECT_LE(testing::relative_deviation(got.values(), want.values()), 1e-6) << "L=" << L;
  }
}

TEST(Attention, ZeroQueryKeysGiveUniformWeights) {
  Rng rng(5);
  AttentionParams<double> p = init_attention<double>(6, 1);
  p.wq.fill(0);
  const std::size_t L = 9;
  const Matrix<double> w = attention_weights(random_matrix<double>(rng, L, 6), p);
  for (double v : w.values()) EXPECT_NEAR(v, 1.0 / L, 1e-15);
}

TEST(Attention, RowsAreStochastic) {
  Rng rng(6);
  const auto p = init_attention<double>(5, 2);
  const Matrix<double> w = attention_weights(random_matrix<double>(rng, 12, 5, 3.0), p);
  for (std::size_t i = 0; i < w.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < w.cols(); ++j) {
      EXPECT_GE(w(i, j), 0.0);
      s += w(i, j);
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Attention, SingleFrameIsValueProjection) {
  Rng rng(7);
  const auto p = init_attention<double>(4, 3);
  const Matrix<double> x = random_matrix<double>(rng, 1, 4);
  const Matrix<double> y = attention_reference_forward(x, p);
  for (std::size_t j = 0; j < 4; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < 4; ++i) s += x(0, i) * p.wv(i, j);
    EXPECT_NEAR(y(0, j), s, 1e-14);
  }
}

TEST(Attention, WidthMismatchThrows) {
  const auto p = init_attention<float>(4, 0);
  EXPECT_THROW(attention_reference_forward(Matrix<float>(3, 5), p), Error);
}

TEST(Attention, StackAddsResiduals) {
  Rng rng(8);
  const Matrix<double> x = random_matrix<double>(rng, 5, 4);
  std::vector<AttentionParams<double>> layers{init_attention<double>(4, 1),
                                              init_attention<double>(4, 2)};
  Matrix<double> want = x;
  for (const auto& l : layers) {
    const Matrix<double> a = naive_attention(want, l);
    for (std::size_t i = 0; i < want.size(); ++i) want.values()[i] += a.values()[i];
  }
  EXPECT_LE(testing::relative_deviation(attention_stack_forward(x, layers).values(), want.values()), 1e-9);
}

BenchOptions quiet(std::vector<double> durations, std::size_t runs, std::size_t warmup = 0) {
  BenchOptions o;
  o.durations_s = std::move(durations);
  o.runs = runs;
  o.warmup = warmup;
  o.warnings = nullptr;
  return o;
}

TEST(MeasureRtf, FramesFollowFrontendGeometry) {
  EXPECT_EQ(frames_for(2.0), 99u);
  EXPECT_EQ(frames_for(10.0), 499u);
  EXPECT_EQ(frames_for(64600.0 / 16000.0), 201u);
}

TEST(MeasureRtf, SingleRunHasZeroStd) {
  std::size_t calls = 0;
  const auto r = measure_rtf<int>(
      "count", [](double, std::size_t) { return 0; }, [&](const int&) { ++calls; },
      quiet({1.0, 2.0}, 1, 2));
  ASSERT_EQ(r.size(), 2u);
  for (const auto& rec : r) {
    EXPECT_EQ(rec.runs, 1u);
    EXPECT_EQ(rec.std_s, 0.0);
    EXPECT_GE(rec.repeats, 1u);
  }
  EXPECT_GE(calls, 2u * 3u);
}

TEST(MeasureRtf, NoOpForwardStillPositive) {
  std::ostringstream warn;
  BenchOptions o = quiet({2.0, 4.0}, 5);
  o.warnings = &warn;
  const auto r = measure_rtf<int>(
      "noop", [](double, std::size_t) { return 1; }, [](const int& v) { keep_alive(v); }, o);
  for (const auto& rec : r) {
    EXPECT_GT(rec.rtf, 0.0);
    EXPECT_GT(rec.repeats, 1u);
    EXPECT_NEAR(rec.rtf, rec.wall_time_s / rec.duration_s, 1e-15);
  }
  EXPECT_NE(warn.str().find("repeating each run"), std::string::npos);
}

TEST(MeasureRtf, InputBuiltPerDurationWithFrameCount) {
  std::vector<std::size_t> seen;
  measure_rtf<std::size_t>(
      "frames", [&](double, std::size_t t) { seen.push_back(t); return t; },
      [](const std::size_t& t) { keep_alive(t); }, quiet({2.0, 3.0, 10.0}, 1));
  EXPECT_EQ(seen, (std::vector<std::size_t>{99, 149, 499}));
}

TEST(MeasureRtf, RejectsBadOptions) {
  auto make = [](double, std::size_t) { return 0; };
  auto fwd = [](const int&) {};
  for (const auto& d : {std::vector<double>{}, std::vector<double>{2.0, 2.0},
                        std::vector<double>{3.0, 2.0}, std::vector<double>{0.0, 1.0}}) {
    try {
      measure_rtf<int>("x", make, fwd, quiet(d, 1));
      ADD_FAILURE() << "expected an error";
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kUsage);
    }
  }
  EXPECT_THROW(measure_rtf<int>("x", make, fwd, quiet({1.0}, 0)), Error);
}

// Best single-call times of `fa` and `fb`, calls alternating so that a burst
// of machine noise lands on both.
std::pair<double, double> interleaved_best(const std::function<void()>& fa,
                                           const std::function<void()>& fb, int pairs = 40) {
  using clock = std::chrono::steady_clock;
  auto once = [](const std::function<void()>& f) {
    const auto t0 = clock::now();
    f();
    return std::chrono::duration<double>(clock::now() - t0).count();
  };
  double a = 1e9, b = 1e9;
  for (int i = 0; i < pairs; ++i) {
    a = std::min(a, once(fa));
    b = std::min(b, once(fb));
  }
  return {a, b};
}

TEST(MeasureRtf, LinearTimeScanDoublesWithDuration) {
  const ModelConfig mc = ModelConfig::tiny();
  const auto p = init_params<float>(mc);
  Rng rng(1);
  const Matrix<float> x5 = random_matrix<float>(rng, frames_for(5.0), mc.d_model);
  const Matrix<float> x10 = random_matrix<float>(rng, frames_for(10.0), mc.d_model);
  const auto [t5, t10] =
      interleaved_best([&] { keep_alive(stack_forward(x5, p.trunk)(0, 0)); },
                       [&] { keep_alive(stack_forward(x10, p.trunk)(0, 0)); });
  EXPECT_GE(t10 / t5, 1.5);
  EXPECT_LE(t10 / t5, 2.5);
}

TEST(MeasureRtf, TrunkTimeIndependentOfContent) {
  const ModelConfig mc = ModelConfig::tiny();
  const auto p = init_params<float>(mc);
  const std::size_t t = frames_for(4.0);
  Rng rng(2);
  const Matrix<float> loud = random_matrix<float>(rng, t, mc.d_model, 5.0);
  const Matrix<float> silent(t, mc.d_model);
  const auto [tl, ts] =
      interleaved_best([&] { keep_alive(stack_forward(loud, p.trunk)(0, 0)); },
                       [&] { keep_alive(stack_forward(silent, p.trunk)(0, 0)); });
  EXPECT_GT(tl / ts, 0.67);
  EXPECT_LT(tl / ts, 1.5);
}

TEST(BenchSystems, TrunkModeLabelsAndShape) {
  ModelConfig mc = ModelConfig::tiny();
  mc.variant = Variant::kExt;
  const auto r = bench_trunk_vs_attention(mc, BenchMode::kTrunk, quiet({2.0, 3.0}, 2));
  ASSERT_EQ(r.size(), 4u);
  EXPECT_EQ(r[0].system, "ext");
  EXPECT_EQ(r[2].system, "attention");
  EXPECT_EQ(r[3].frames, 149u);
}

TEST(BenchSystems, FrontendModeIsLabelledSeparately) {
  const auto r =
      bench_trunk_vs_attention(ModelConfig::tiny(), BenchMode::kFrontend, quiet({1.0}, 1));
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].system, "frontend+dua");
  EXPECT_EQ(r[1].system, "frontend+attention");
  EXPECT_EQ(parse_bench_mode("frontend"), BenchMode::kFrontend);
  EXPECT_THROW(parse_bench_mode("gpu"), Error);
}

std::vector<RtfRecord> fake_records() {
  std::vector<RtfRecord> out;
  for (const char* sys : {"dua", "attention"})
    for (int d = 2; d <= 10; ++d) {
      RtfRecord r;
      r.system = sys;
      r.duration_s = d;
      r.frames = frames_for(d);
      r.wall_time_s = 1e-4 * d * (sys[0] == 'a' ? d : 1);
      r.rtf = r.wall_time_s / d;
      r.std_s = 1e-6 * d;
      r.runs = 20;
      out.push_back(r);
    }
  return out;
}

TEST(EmitResults, CsvHasOneRowPerSystemAndDuration) {
  const std::string csv = results_csv(fake_records());
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "system,duration_s,rtf,std");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 3);
  }
  EXPECT_EQ(rows, 18u);
  EXPECT_NE(csv.find("\ndua,2,0.0001,1e-06\n"), std::string::npos) << csv;
}

TEST(EmitResults, SvgIsDeterministicWithOneLinePerSystem) {
  const std::string a = results_svg(fake_records()), b = results_svg(fake_records());
  EXPECT_EQ(a, b);
  std::size_t lines = 0;
  for (auto p = a.find("<polyline"); p != std::string::npos; p = a.find("<polyline", p + 1)) ++lines;
  EXPECT_EQ(lines, 2u);
  EXPECT_NE(a.find(">attention</text>"), std::string::npos);
}

TEST(EmitResults, EmptyRecords) {
  EXPECT_EQ(results_csv({}), "system,duration_s,rtf,std\n");
  EXPECT_THROW(results_svg({}), Error);
}

TEST(EmitResults, WritesFilesAndRejectsUnwritablePaths) {
  const auto dir = std::filesystem::temp_directory_path() / "xmamba_bench_test";
  std::filesystem::create_directories(dir);
  const std::string csv = (dir / "r.csv").string(), svg = (dir / "r.svg").string();
  emit_results(fake_records(), ResultFormat::kCsv, csv);
  emit_results(fake_records(), ResultFormat::kSvg, svg);
  EXPECT_TRUE(std::filesystem::file_size(csv) > 0 && std::filesystem::file_size(svg) > 0);
  EXPECT_THROW(emit_results(fake_records(), ResultFormat::kCsv, (dir / "no/such/dir/r.csv").string()),
               Error);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace xmamba
