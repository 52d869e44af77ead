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

// Detection metrics over countermeasure scores (higher = more bonafide).
//
// Decision rule: a trial is accepted as bonafide at threshold t iff
// score >= t. Hence
//   P_miss(t) = #{bonafide : score <  t} / N_bonafide
//   P_fa(t)   = #{spoof    : score >= t} / N_spoof
// DET points are taken at every distinct score and at t = +inf, so the
// curve runs from (0, 1) to (1, 0).

#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "xmamba/tensor.hpp"
#include "xmamba/types.hpp"

namespace xmamba {

struct TrialScore {
  std::string utt_id;
  double score = 0.0;
  std::optional<Label> label;
};

struct DetPoint {
  double threshold;
  double p_miss;
  double p_fa;
};

namespace detail {

struct SplitScores {
  std::vector<double> bona, spoof;
};

inline SplitScores split_by_label(const std::vector<TrialScore>& trials) {
  SplitScores s;
  for (const auto& t : trials) {
    require(t.label.has_value(), "metrics: trial '" + t.utt_id + "' has no label");
    require(std::isfinite(t.score), "metrics: non-finite score for '" + t.utt_id + "'");
    (*t.label == Label::kBonafide ? s.bona : s.spoof).push_back(t.score);
  }
  require(!s.bona.empty() && !s.spoof.empty(),
          "degenerate protocol: need at least one bonafide and one spoof trial");
  std::sort(s.bona.begin(), s.bona.end());
  std::sort(s.spoof.begin(), s.spoof.end());
  return s;
}

}  // namespace detail

/// Error rates at a single threshold.
inline DetPoint error_rates(const std::vector<TrialScore>& trials, double threshold) {
  const auto s = detail::split_by_label(trials);
  const auto miss = std::lower_bound(s.bona.begin(), s.bona.end(), threshold) - s.bona.begin();
  const auto fa = s.spoof.end() - std::lower_bound(s.spoof.begin(), s.spoof.end(), threshold);
  return {threshold, double(miss) / double(s.bona.size()), double(fa) / double(s.spoof.size())};
}

/// DET points ordered by increasing threshold, ending with +inf.
inline std::vector<DetPoint> det_points(const std::vector<TrialScore>& trials) {
  const auto s = detail::split_by_label(trials);
  std::vector<double> all;
  all.reserve(s.bona.size() + s.spoof.size());
  std::merge(s.bona.begin(), s.bona.end(), s.spoof.begin(), s.spoof.end(),
             std::back_inserter(all));
  all.erase(std::unique(all.begin(), all.end()), all.end());
  const double nb = double(s.bona.size()), ns = double(s.spoof.size());
  std::vector<DetPoint> pts;
  pts.reserve(all.size() + 1);
  std::size_t ib = 0, is = 0;  // counts of scores strictly below the threshold
  for (double t : all) {
    while (ib < s.bona.size() && s.bona[ib] < t) ++ib;
    while (is < s.spoof.size() && s.spoof[is] < t) ++is;
    pts.push_back({t, double(ib) / nb, double(s.spoof.size() - is) / ns});
  }
  pts.push_back({std::numeric_limits<double>::infinity(), 1.0, 0.0});
  return pts;
}

struct EerResult {
  double eer;
  double threshold;
};

/// EER by linear interpolation between the two DET points bracketing the
/// P_miss = P_fa crossing. The threshold is interpolated the same way
/// (or taken from the finite end when the bracket reaches +inf).
inline EerResult eer_from_det(const std::vector<DetPoint>& pts) {
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double d = pts[i].p_miss - pts[i].p_fa;
    if (d < 0.0) continue;
    if (d == 0.0 || i == 0) return {pts[i].p_miss, pts[i].threshold};
    const DetPoint& a = pts[i - 1];
    const DetPoint& b = pts[i];
    const double da = a.p_miss - a.p_fa;
    const double alpha = -da / (d - da);
    const double eer = a.p_miss + alpha * (b.p_miss - a.p_miss);
    const double thr = std::isinf(b.threshold) ? a.threshold
                                               : a.threshold + alpha * (b.threshold - a.threshold);
    return {eer, thr};
  }
  throw Error("eer: DET curve never crosses", ErrorKind::kNumerical);
}

inline EerResult compute_eer(const std::vector<TrialScore>& trials) {
  return eer_from_det(det_points(trials));
}

/// Constrained tandem cost model with a fixed ASV operating point.
/// The defaults follow the ASVspoof 2021 LA convention for priors and costs;
/// the ASV error rates are placeholders, since they belong to whatever ASV
/// system the countermeasure is paired with.
struct TdcfCostModel {
  double p_spoof = 0.05;
  double p_target = 0.9405;     // (1 - p_spoof) * 0.99
  double p_nontarget = 0.0095;  // (1 - p_spoof) * 0.01
  double c_miss = 1.0;
  double c_fa = 10.0;
  double c_fa_spoof = 10.0;
  double asv_p_miss = 0.01;
  double asv_p_fa = 0.01;
  double asv_p_spoof_fa = 0.4;  // share of spoofs the ASV accepts

  struct Coefficients {
    double c0, c1, c2;
  };

  Coefficients coefficients() const {
    const double c0 = p_target * c_miss * asv_p_miss + p_nontarget * c_fa * asv_p_fa;
    const double c1 = p_target * c_miss - c0;
    const double c2 = c_fa_spoof * p_spoof * asv_p_spoof_fa;
    return {c0, c1, c2};
  }

  void validate() const {
    const double priors[] = {p_spoof, p_target, p_nontarget};
    for (double p : priors) require(p >= 0.0 && p <= 1.0, "t-DCF: prior outside [0,1]", ErrorKind::kUsage);
    require(std::abs(p_spoof + p_target + p_nontarget - 1.0) < 1e-9,
            "t-DCF: priors must sum to 1", ErrorKind::kUsage);
    require(c_miss > 0 && c_fa > 0 && c_fa_spoof > 0, "t-DCF: costs must be positive",
            ErrorKind::kUsage);
    const double rates[] = {asv_p_miss, asv_p_fa, asv_p_spoof_fa};
    for (double r : rates) require(r >= 0.0 && r <= 1.0, "t-DCF: ASV rate outside [0,1]", ErrorKind::kUsage);
    const auto c = coefficients();
    require(c.c1 > 0.0 && c.c2 > 0.0, "t-DCF: invalid cost model (C1 or C2 <= 0)",
            ErrorKind::kUsage);
  }
};

struct TdcfResult {
  double min_tdcf;  // normalized
  double threshold;
};

inline TdcfResult min_tdcf(const std::vector<TrialScore>& trials, const TdcfCostModel& m) {
  m.validate();
  const auto k = m.coefficients();
  const double norm = std::min(k.c0 + k.c1, k.c0 + k.c2);
  TdcfResult best{std::numeric_limits<double>::infinity(), 0.0};
  for (const auto& p : det_points(trials)) {
    const double v = (k.c0 + k.c1 * p.p_miss + k.c2 * p.p_fa) / norm;
    if (v < best.min_tdcf) best = {v, p.threshold};
  }
  return best;
}

inline TdcfCostModel read_cost_model(const std::string& path) {
  std::ifstream in(path);
  require(bool(in), "cannot open t-DCF cost model '" + path + "'");
  TdcfCostModel m;
  const std::map<std::string, double*> keys = {
      {"p_spoof", &m.p_spoof},       {"p_target", &m.p_target},
      {"p_nontarget", &m.p_nontarget}, {"c_miss", &m.c_miss},
      {"c_fa", &m.c_fa},             {"c_fa_spoof", &m.c_fa_spoof},
      {"asv_p_miss", &m.asv_p_miss}, {"asv_p_fa", &m.asv_p_fa},
      {"asv_p_spoof_fa", &m.asv_p_spoof_fa}};
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    if (trim(line).empty()) continue;
    const std::string where = path + ":" + std::to_string(n);
    require(eq != std::string::npos, where + ": expected key=value", ErrorKind::kUsage);
    const std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
    const auto it = keys.find(key);
    require(it != keys.end(), where + ": unknown t-DCF key '" + key + "'", ErrorKind::kUsage);
    std::size_t used = 0;
    try {
      *it->second = std::stod(val, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    require(used == val.size() && used > 0, where + ": bad number '" + val + "'", ErrorKind::kUsage);
  }
  m.validate();
  return m;
}

/// Result of joining a score file with a protocol on utt_id.
struct JoinedTrials {
  std::vector<TrialScore> trials;          // score-file order
  std::vector<std::string> unmatched_scores;    // scored but absent from protocol
  std::vector<std::string> unmatched_protocol;  // in protocol but never scored
};

namespace detail {

inline std::vector<std::string> tokens(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  for (std::string t; ss >> t;) out.push_back(t);
  return out;
}

}  // namespace detail

/// Score file: `<utt_id> <score>` per line. Blank lines and lines starting
/// with '#' are skipped.
inline std::vector<TrialScore> read_scores(std::istream& in, const std::string& name = "scores") {
  std::vector<TrialScore> out;
  std::set<std::string> seen;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    const auto tok = detail::tokens(line);
    if (tok.empty() || tok[0][0] == '#') continue;
    const std::string where = name + ":" + std::to_string(n);
    require(tok.size() == 2, where + ": expected '<utt_id> <score>'");
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok[1], &used);
    } catch (const std::exception&) {
      used = 0;
    }
    require(used == tok[1].size(), where + ": malformed score '" + tok[1] + "'");
    require(seen.insert(tok[0]).second, where + ": duplicate utt_id '" + tok[0] + "'");
    out.push_back({tok[0], v, std::nullopt});
  }
  return out;
}

/// Protocol file: `<utt_id> <bonafide|spoof>` per line. Lines with more than
/// two fields follow the ASVspoof layout `<speaker> <utt_id> ... <label>`.
inline std::map<std::string, Label> read_protocol(std::istream& in,
                                                  const std::string& name = "protocol") {
  std::map<std::string, Label> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    const auto tok = detail::tokens(line);
    if (tok.empty() || tok[0][0] == '#') continue;
    const std::string where = name + ":" + std::to_string(n);
    require(tok.size() >= 2, where + ": expected '<utt_id> <label>'");
    const std::string& id = tok.size() == 2 ? tok[0] : tok[1];
    Label l;
    try {
      l = parse_label(tok.back());
    } catch (const Error& e) {
      throw Error(where + ": " + e.what());
    }
    require(out.emplace(id, l).second, where + ": duplicate utt_id '" + id + "'");
  }
  return out;
}

inline JoinedTrials join_trials(const std::vector<TrialScore>& scores,
                                const std::map<std::string, Label>& protocol) {
  JoinedTrials j;
  std::set<std::string> used;
  for (const auto& s : scores) {
    const auto it = protocol.find(s.utt_id);
    if (it == protocol.end()) {
      j.unmatched_scores.push_back(s.utt_id);
      continue;
    }
    j.trials.push_back({s.utt_id, s.score, it->second});
    used.insert(s.utt_id);
  }
  for (const auto& [id, l] : protocol)
    if (!used.count(id)) j.unmatched_protocol.push_back(id);
  return j;
}

inline JoinedTrials read_and_join(const std::string& score_path, const std::string& protocol_path) {
  std::ifstream s(score_path), p(protocol_path);
  require(bool(s), "cannot open score file '" + score_path + "'");
  require(bool(p), "cannot open protocol file '" + protocol_path + "'");
  return join_trials(read_scores(s, score_path), read_protocol(p, protocol_path));
}

}  // namespace xmamba
