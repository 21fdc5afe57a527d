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

#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fusioncm {

enum class TrialKey { kBonafide, kSpoof };

// Case-insensitive "bonafide" / "spoof".
TrialKey ParseTrialKey(const std::string &text);
const char *TrialKeyName(TrialKey key);

struct ScoreRecord {
  std::string utterance_id;
  double score = 0.0;
  std::optional<TrialKey> key;
};

// Bona fide is the target class. At threshold t a trial is rejected iff
// score < t. Thresholds are -inf, every distinct score ascending, +inf.
struct DetCurve {
  std::vector<double> thresholds;
  std::vector<double> e_fr;
  std::vector<double> e_fa;
  std::size_t n_target = 0;
  std::size_t n_nontarget = 0;

  std::size_t size() const { return thresholds.size(); }
};

DetCurve ComputeDet(std::span<const double> target_scores, std::span<const double> nontarget_scores);
DetCurve ComputeDet(std::span<const ScoreRecord> records);

// Crossing of e_fr and e_fa, linearly interpolated along the polyline.
double Eer(const DetCurve &curve);

// min over sweep points of beta * P_miss + P_fa.
double MinTdcf(const DetCurve &curve, double beta);

struct MetricReport {
  std::size_t n_bonafide = 0;
  std::size_t n_spoof = 0;
  double eer = 0.0;
  double min_tdcf = 0.0;
  double beta = 1.0;
  DetCurve det;
};

MetricReport Evaluate(std::span<const ScoreRecord> records, double beta);

std::string FormatReportText(const MetricReport &report);
std::string FormatReportKeyValue(const MetricReport &report);
void WriteDetCsv(std::ostream &out, const DetCurve &curve);

// "utt score" per line. Blank lines are skipped.
std::vector<ScoreRecord> ReadScores(std::istream &in);
std::vector<ScoreRecord> LoadScoreFile(const std::filesystem::path &path);
void WriteScores(std::ostream &out, std::span<const ScoreRecord> records);
void SaveScoreFile(const std::filesystem::path &path, std::span<const ScoreRecord> records);

// "utt key" per line; 5-field protocol lines are also accepted (utterance in
// field 2, key in field 5).
std::map<std::string, TrialKey> ReadKeys(std::istream &in);
std::map<std::string, TrialKey> LoadKeyFile(const std::filesystem::path &path);

// Fills record keys; throws kEvaluation listing every unkeyed utterance.
void AttachKeys(std::vector<ScoreRecord> &records, const std::map<std::string, TrialKey> &keys);

}  // namespace fusioncm
