// Copyright 2026 The fusioncm Authors
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

#include "fusioncm/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "fusioncm/errors.hpp"

namespace fusioncm {

TrialKey ParseTrialKey(const std::string &text) {
  std::string s = text;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "bonafide") return TrialKey::kBonafide;
  if (s == "spoof") return TrialKey::kSpoof;
  Fail(ErrorKind::kParse, "unknown trial key '" + text + "'");
}

const char *TrialKeyName(TrialKey key) { return key == TrialKey::kBonafide ? "bonafide" : "spoof"; }

DetCurve ComputeDet(std::span<const double> target_scores, std::span<const double> nontarget_scores) {
  if (target_scores.empty() || nontarget_scores.empty()) {
    Fail(ErrorKind::kEvaluation, "DET needs at least one bonafide and one spoof trial");
  }
  std::vector<double> tar(target_scores.begin(), target_scores.end());
  std::vector<double> non(nontarget_scores.begin(), nontarget_scores.end());
  for (double s : tar) {
    if (!std::isfinite(s)) Fail(ErrorKind::kEvaluation, "non-finite score");
  }
  for (double s : non) {
    if (!std::isfinite(s)) Fail(ErrorKind::kEvaluation, "non-finite score");
  }
  std::sort(tar.begin(), tar.end());
  std::sort(non.begin(), non.end());
  std::vector<double> all;
  all.reserve(tar.size() + non.size());
  std::merge(tar.begin(), tar.end(), non.begin(), non.end(), std::back_inserter(all));
  all.erase(std::unique(all.begin(), all.end()), all.end());

  DetCurve c;
  c.n_target = tar.size();
  c.n_nontarget = non.size();
  const double nt = static_cast<double>(c.n_target);
  const double nn = static_cast<double>(c.n_nontarget);
  auto push = [&](double t) {
    const auto fr = static_cast<std::size_t>(std::lower_bound(tar.begin(), tar.end(), t) - tar.begin());
    const auto below = static_cast<std::size_t>(std::lower_bound(non.begin(), non.end(), t) - non.begin());
    c.thresholds.push_back(t);
    c.e_fr.push_back(static_cast<double>(fr) / nt);
    c.e_fa.push_back(static_cast<double>(c.n_nontarget - below) / nn);
  };
  push(-std::numeric_limits<double>::infinity());
  for (double t : all) push(t);
  push(std::numeric_limits<double>::infinity());
  return c;
}

DetCurve ComputeDet(std::span<const ScoreRecord> records) {
  std::vector<double> tar, non;
  for (const ScoreRecord &r : records) {
    if (!r.key) Fail(ErrorKind::kEvaluation, "utterance '" + r.utterance_id + "' has no key");
    (*r.key == TrialKey::kBonafide ? tar : non).push_back(r.score);
  }
  return ComputeDet(tar, non);
}

double Eer(const DetCurve &curve) {
  if (curve.size() < 2) Fail(ErrorKind::kEvaluation, "DET curve has fewer than two points");
  double prev_d = curve.e_fa[0] - curve.e_fr[0];
  if (prev_d <= 0.0) return curve.e_fr[0];
  for (std::size_t i = 1; i < curve.size(); ++i) {
    const double d = curve.e_fa[i] - curve.e_fr[i];
    if (d == 0.0) return curve.e_fr[i];
    if (d < 0.0) {
      const double a = prev_d / (prev_d - d);
      return curve.e_fr[i - 1] + a * (curve.e_fr[i] - curve.e_fr[i - 1]);
    }
    prev_d = d;
  }
  Fail(ErrorKind::kEvaluation, "DET curve never crosses");
}

double MinTdcf(const DetCurve &curve, double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    Fail(ErrorKind::kParameter, "t-DCF beta must be positive and finite");
  }
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < curve.size(); ++i) {
    best = std::min(best, beta * curve.e_fr[i] + curve.e_fa[i]);
  }
  return best;
}

MetricReport Evaluate(std::span<const ScoreRecord> records, double beta) {
  MetricReport r;
  r.beta = beta;
  r.det = ComputeDet(records);
  r.n_bonafide = r.det.n_target;
  r.n_spoof = r.det.n_nontarget;
  r.eer = Eer(r.det);
  r.min_tdcf = MinTdcf(r.det, beta);
  return r;
}

std::string FormatReportText(const MetricReport &report) {
  std::ostringstream o;
  o << std::setprecision(6);
  o << "trials      " << report.n_bonafide + report.n_spoof << " (bonafide " << report.n_bonafide
    << ", spoof " << report.n_spoof << ")\n";
  o << "EER         " << report.eer * 100.0 << " %\n";
  o << "min t-DCF   " << report.min_tdcf << " (beta " << report.beta << ")\n";
  return o.str();
}

std::string FormatReportKeyValue(const MetricReport &report) {
  std::ostringstream o;
  o << std::setprecision(17);
  o << "n_bonafide=" << report.n_bonafide << "\n";
  o << "n_spoof=" << report.n_spoof << "\n";
  o << "eer=" << report.eer << "\n";
  o << "eer_percent=" << report.eer * 100.0 << "\n";
  o << "min_tdcf=" << report.min_tdcf << "\n";
  o << "beta=" << report.beta << "\n";
  return o.str();
}

void WriteDetCsv(std::ostream &out, const DetCurve &curve) {
  out << "threshold,e_fr,e_fa\n" << std::setprecision(17);
  for (std::size_t i = 0; i < curve.size(); ++i) {
    out << curve.thresholds[i] << ',' << curve.e_fr[i] << ',' << curve.e_fa[i] << '\n';
  }
}

namespace {

std::vector<std::string> Fields(const std::string &line) {
  std::istringstream is(line);
  std::vector<std::string> f;
  for (std::string w; is >> w;) f.push_back(w);
  return f;
}

std::ifstream OpenIn(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorKind::kIo, "cannot open " + path.string());
  return in;
}

}  // namespace

std::vector<ScoreRecord> ReadScores(std::istream &in) {
  std::vector<ScoreRecord> out;
  std::set<std::string> seen;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    const auto f = Fields(line);
    if (f.empty()) continue;
    if (f.size() != 2) {
      Fail(ErrorKind::kParse, "score line " + std::to_string(n) + ": expected 'utterance score'");
    }
    ScoreRecord r;
    r.utterance_id = f[0];
    std::size_t used = 0;
    try {
      r.score = std::stod(f[1], &used);
    } catch (const std::exception &) {
      used = 0;
    }
    if (used != f[1].size() || !std::isfinite(r.score)) {
      Fail(ErrorKind::kParse, "score line " + std::to_string(n) + ": bad score '" + f[1] + "'");
    }
    if (!seen.insert(r.utterance_id).second) {
      Fail(ErrorKind::kIntegrity, "score line " + std::to_string(n) + ": duplicate utterance '" +
                                      r.utterance_id + "'");
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<ScoreRecord> LoadScoreFile(const std::filesystem::path &path) {
  std::ifstream in = OpenIn(path);
  return ReadScores(in);
}

void WriteScores(std::ostream &out, std::span<const ScoreRecord> records) {
  out << std::setprecision(17);
  for (const ScoreRecord &r : records) out << r.utterance_id << ' ' << r.score << '\n';
}

void SaveScoreFile(const std::filesystem::path &path, std::span<const ScoreRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) Fail(ErrorKind::kIo, "cannot write " + path.string());
  WriteScores(out, records);
}

std::map<std::string, TrialKey> ReadKeys(std::istream &in) {
  std::map<std::string, TrialKey> keys;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    const auto f = Fields(line);
    if (f.empty()) continue;
    if (f.size() != 2 && f.size() != 5) {
      Fail(ErrorKind::kParse, "key line " + std::to_string(n) + ": expected 2 or 5 fields");
    }
    const std::string &utt = f.size() == 2 ? f[0] : f[1];
    TrialKey k;
    try {
      k = ParseTrialKey(f.back());
    } catch (const Error &e) {
      Fail(ErrorKind::kParse, "key line " + std::to_string(n) + ": " + e.what());
    }
    if (!keys.emplace(utt, k).second) {
      Fail(ErrorKind::kIntegrity, "key line " + std::to_string(n) + ": duplicate utterance '" + utt + "'");
    }
  }
  return keys;
}

std::map<std::string, TrialKey> LoadKeyFile(const std::filesystem::path &path) {
  std::ifstream in = OpenIn(path);
  return ReadKeys(in);
}

void AttachKeys(std::vector<ScoreRecord> &records, const std::map<std::string, TrialKey> &keys) {
  std::string missing;
  std::size_t n_missing = 0;
  for (ScoreRecord &r : records) {
    auto it = keys.find(r.utterance_id);
    if (it == keys.end()) {
      if (n_missing++ < 20) missing += (missing.empty() ? "" : ",") + r.utterance_id;
    } else {
      r.key = it->second;
    }
  }
  if (n_missing) {
    Fail(ErrorKind::kEvaluation, std::to_string(n_missing) + " unkeyed utterance(s): " + missing +
                                     (n_missing > 20 ? ",..." : ""));
  }
}

}  // namespace fusioncm
