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

// Quadratic-time reference implementations of the detection metrics. They
// count every trial against every candidate threshold instead of sweeping a
// sorted list.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "xmamba/metrics.hpp"
#include "xmamba/random.hpp"

namespace xmamba::oracle {

inline std::vector<TrialScore> random_trials(Rng& rng, std::size_t n, bool with_ties) {
  std::vector<TrialScore> t;
  for (std::size_t i = 0; i < n; ++i) {
    const bool bona = i == 0 ? true : i == 1 ? false : rng.uniform() < 0.5;
    double s = rng.normal() + (bona ? rng.uniform(0.0, 1.5) : 0.0);
    if (with_ties) s = std::round(s * 4.0) / 4.0;
    t.push_back({"t" + std::to_string(i), s, bona ? Label::kBonafide : Label::kSpoof});
  }
  return t;
}

inline std::vector<DetPoint> brute_det(const std::vector<TrialScore>& t) {
  std::vector<double> thr;
  for (const auto& x : t)
    if (std::find(thr.begin(), thr.end(), x.score) == thr.end()) thr.push_back(x.score);
  std::sort(thr.begin(), thr.end());
  thr.push_back(std::numeric_limits<double>::infinity());
  std::vector<DetPoint> out;
  for (double th : thr) {
    double nb = 0, ns = 0, miss = 0, fa = 0;
    for (const auto& x : t) {
      if (*x.label == Label::kBonafide) {
        ++nb;
        if (x.score < th) ++miss;
      } else {
        ++ns;
        if (x.score >= th) ++fa;
      }
    }
    out.push_back({th, miss / nb, fa / ns});
  }
  return out;
}

/// Crossing of the piecewise-linear P_miss and P_fa curves, found by
/// intersecting the two segment lines on every interval.
inline double brute_eer(const std::vector<TrialScore>& t) {
  const auto p = brute_det(t);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i].p_miss == p[i].p_fa) return p[i].p_miss;
    if (i + 1 == p.size()) break;
    const double m0 = p[i].p_miss, m1 = p[i + 1].p_miss;
    const double f0 = p[i].p_fa, f1 = p[i + 1].p_fa;
    if (m0 < f0 && m1 > f1) {
      // m0 + a (m1 - m0) = f0 + a (f1 - f0)
      const double a = (f0 - m0) / ((m1 - m0) - (f1 - f0));
      return m0 + a * (m1 - m0);
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

/// Sweeps every score, every midpoint between neighbouring scores, and both
/// infinities.
inline double brute_min_tdcf(const std::vector<TrialScore>& t, const TdcfCostModel& m) {
  std::vector<double> s;
  for (const auto& x : t) s.push_back(x.score);
  std::sort(s.begin(), s.end());
  std::vector<double> cand = s;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) cand.push_back(0.5 * (s[i] + s[i + 1]));
  cand.push_back(std::numeric_limits<double>::infinity());
  cand.push_back(-std::numeric_limits<double>::infinity());
  const double c0 = m.p_target * m.c_miss * m.asv_p_miss + m.p_nontarget * m.c_fa * m.asv_p_fa;
  const double c1 = m.p_target * m.c_miss - c0;
  const double c2 = m.c_fa_spoof * m.p_spoof * m.asv_p_spoof_fa;
  double best = std::numeric_limits<double>::infinity();
  for (double th : cand) {
    double nb = 0, ns = 0, miss = 0, fa = 0;
    for (const auto& x : t) {
      if (*x.label == Label::kBonafide) {
        ++nb;
        miss += x.score < th;
      } else {
        ++ns;
        fa += x.score >= th;
      }
    }
    best = std::min(best, c0 + c1 * (miss / nb) + c2 * (fa / ns));
  }
  return best / std::min(c0 + c1, c0 + c2);
}

}  // namespace xmamba::oracle
