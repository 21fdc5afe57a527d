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

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "fusioncm/errors.hpp"
#include "fusioncm/metrics.hpp"
#include "fusioncm/rng.hpp"
#include "support/common.hpp"
#include "support/oracles.hpp"
#include "support/score_sets.hpp"

namespace fusioncm {
namespace {

using testing::BruteEer;
using testing::BruteMinTdcf;
using testing::RandomScoreSet;
using testing::ScoreSet;

ErrorKind KindOf(const std::function<void()> &fn) {
  try {
    fn();
  } catch (const Error &e) {
    return e.kind();
  }
  ADD_FAILURE() << "no fusioncm::Error thrown";
  return ErrorKind::kIo;
}

TEST(Metrics, MatchBruteForceSweep) {
  Rng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const ScoreSet s = RandomScoreSet(rng);
    const DetCurve det = ComputeDet(s.tar, s.non);
    for (double beta : {0.5, 1.0, 2.0}) {
      ASSERT_EQ(MinTdcf(det, beta), BruteMinTdcf(s.tar, s.non, beta)) << "trial " << trial;
    }
    ASSERT_NEAR(Eer(det), BruteEer(s.tar, s.non), 1e-12) << "trial " << trial;
  }
}

TEST(Metrics, InvariantUnderMonotoneTransform) {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const ScoreSet s = RandomScoreSet(rng);
    ScoreSet t = s;
    // Strictly increasing, so ties stay ties and order is kept.
    for (double &v : t.tar) v = std::exp(0.7 * v) - 3.0;
    for (double &v : t.non) v = std::exp(0.7 * v) - 3.0;
    const DetCurve a = ComputeDet(s.tar, s.non), b = ComputeDet(t.tar, t.non);
    EXPECT_EQ(a.e_fr, b.e_fr);
    EXPECT_EQ(a.e_fa, b.e_fa);
    EXPECT_NEAR(Eer(a), Eer(b), 1e-12);
    EXPECT_EQ(MinTdcf(a, 1.0), MinTdcf(b, 1.0));
  }
}

TEST(Metrics, InvariantUnderPermutation) {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    ScoreSet s = RandomScoreSet(rng);
    const DetCurve a = ComputeDet(s.tar, s.non);
    rng.Shuffle(s.tar);
    rng.Shuffle(s.non);
    const DetCurve b = ComputeDet(s.tar, s.non);
    EXPECT_EQ(Eer(a), Eer(b));
    EXPECT_EQ(MinTdcf(a, 2.0), MinTdcf(b, 2.0));
  }
}

TEST(Metrics, RatesMonotoneAndBounded) {
  Rng rng(14);
  for (int trial = 0; trial < 100; ++trial) {
    const ScoreSet s = RandomScoreSet(rng);
    const DetCurve det = ComputeDet(s.tar, s.non);
    ASSERT_EQ(det.thresholds.front(), -std::numeric_limits<double>::infinity());
    ASSERT_EQ(det.thresholds.back(), std::numeric_limits<double>::infinity());
    EXPECT_EQ(det.e_fr.front(), 0.0);
    EXPECT_EQ(det.e_fa.front(), 1.0);
    EXPECT_EQ(det.e_fr.back(), 1.0);
    EXPECT_EQ(det.e_fa.back(), 0.0);
    for (std::size_t i = 1; i < det.size(); ++i) {
      EXPECT_LT(det.thresholds[i - 1], det.thresholds[i]);
      EXPECT_GE(det.e_fr[i], det.e_fr[i - 1]);
      EXPECT_LE(det.e_fa[i], det.e_fa[i - 1]);
    }
    const double eer = Eer(det);
    EXPECT_GE(eer, 0.0);
    EXPECT_LE(eer, 1.0);
    for (double beta : {0.5, 1.0, 2.0}) {
      const double m = MinTdcf(det, beta);
      EXPECT_GE(m, 0.0);
      EXPECT_LE(m, std::min(beta, 1.0));
    }
  }
}

TEST(Metrics, KnownCases) {
  const std::vector<double> tar = {2, 3, 4}, non = {-1, 0, 1};
  const DetCurve sep = ComputeDet(tar, non);
  EXPECT_EQ(Eer(sep), 0.0);
  EXPECT_EQ(MinTdcf(sep, 1.0), 0.0);
  // Fully inverted: every bonafide below every spoof.
  const DetCurve inv = ComputeDet(non, tar);
  EXPECT_EQ(Eer(inv), 1.0);
  // All scores equal: the only points are (0,1), (0,1) at t = s, and (1,0).
  const std::vector<double> same(4, 0.5);
  EXPECT_NEAR(Eer(ComputeDet(same, same)), 0.5, 1e-15);
  // Mirror-symmetric score sets cross exactly halfway.
  const std::vector<double> t2 = {0.0, 2.0}, n2 = {1.0, -1.0};
  EXPECT_NEAR(Eer(ComputeDet(t2, n2)), 0.5, 1e-15);
}

TEST(Metrics, Errors) {
  const std::vector<double> one = {1.0}, none;
  EXPECT_EQ(KindOf([&] { ComputeDet(one, none); }), ErrorKind::kEvaluation);
  EXPECT_EQ(KindOf([&] { ComputeDet(none, one); }), ErrorKind::kEvaluation);
  const std::vector<double> bad = {std::nan("")};
  EXPECT_EQ(KindOf([&] { ComputeDet(bad, one); }), ErrorKind::kEvaluation);
  const DetCurve det = ComputeDet(one, std::vector<double>{0.0});
  EXPECT_EQ(KindOf([&] { MinTdcf(det, 0.0); }), ErrorKind::kParameter);
  EXPECT_EQ(KindOf([&] { MinTdcf(det, -1.0); }), ErrorKind::kParameter);
  EXPECT_EQ(KindOf([&] { MinTdcf(det, std::numeric_limits<double>::infinity()); }), ErrorKind::kParameter);
  std::vector<ScoreRecord> unkeyed = {{"a", 1.0, TrialKey::kBonafide}, {"b", 0.0, std::nullopt}};
  EXPECT_EQ(KindOf([&] { ComputeDet(unkeyed); }), ErrorKind::kEvaluation);
}

TEST(ScoreFiles, ParseAndRoundTrip) {
  std::istringstream in("utt1 0.5\n\nutt2   -1e3\nutt3 7\n");
  const auto recs = ReadScores(in);
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(recs[1].utterance_id, "utt2");
  EXPECT_EQ(recs[1].score, -1000.0);

  std::vector<ScoreRecord> out;
  Rng rng(15);
  for (int i = 0; i < 50; ++i) out.push_back({"u" + std::to_string(i), rng.Normal() * 1e3, std::nullopt});
  testing::TempDir dir("scores");
  SaveScoreFile(dir.path() / "s.txt", out);
  const auto back = LoadScoreFile(dir.path() / "s.txt");
  ASSERT_EQ(back.size(), out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_EQ(back[i].utterance_id, out[i].utterance_id);
    EXPECT_EQ(back[i].score, out[i].score);
  }
  EXPECT_EQ(KindOf([&] { LoadScoreFile(dir.path() / "missing.txt"); }), ErrorKind::kIo);
}

TEST(ScoreFiles, MalformedInput) {
  auto scores = [](const std::string &text) {
    std::istringstream in(text);
    return KindOf([&] { ReadScores(in); });
  };
  EXPECT_EQ(scores("utt1\n"), ErrorKind::kParse);
  EXPECT_EQ(scores("utt1 0.5 extra\n"), ErrorKind::kParse);
  EXPECT_EQ(scores("utt1 abc\n"), ErrorKind::kParse);
  EXPECT_EQ(scores("utt1 0.5x\n"), ErrorKind::kParse);
  EXPECT_EQ(scores("utt1 inf\n"), ErrorKind::kParse);
  EXPECT_EQ(scores("utt1 nan\n"), ErrorKind::kParse);
  EXPECT_EQ(scores("utt1 0.5\nutt1 0.7\n"), ErrorKind::kIntegrity);

  auto keys = [](const std::string &text) {
    std::istringstream in(text);
    return KindOf([&] { ReadKeys(in); });
  };
  EXPECT_EQ(keys("utt1 maybe\n"), ErrorKind::kParse);
  EXPECT_EQ(keys("utt1 spoof x\n"), ErrorKind::kParse);
  EXPECT_EQ(keys("utt1 spoof\nutt1 bonafide\n"), ErrorKind::kIntegrity);
}

TEST(KeyFiles, TwoAndFiveFieldForms) {
  std::istringstream in("a bonafide\nSPK b - A01 spoof\nc BonaFide\n");
  const auto keys = ReadKeys(in);
  ASSERT_EQ(keys.size(), 3u);
  EXPECT_EQ(keys.at("a"), TrialKey::kBonafide);
  EXPECT_EQ(keys.at("b"), TrialKey::kSpoof);
  EXPECT_EQ(keys.at("c"), TrialKey::kBonafide);

  std::vector<ScoreRecord> recs = {{"a", 1.0, {}}, {"b", 0.0, {}}, {"x", 0.0, {}}, {"y", 0.0, {}}};
  try {
    AttachKeys(recs, keys);
    ADD_FAILURE() << "expected kEvaluation";
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::kEvaluation);
    const std::string msg = e.what();
    EXPECT_NE(msg.find('x'), std::string::npos);
    EXPECT_NE(msg.find('y'), std::string::npos);
  }
  recs.resize(2);
  AttachKeys(recs, keys);
  EXPECT_EQ(recs[1].key, TrialKey::kSpoof);
}

TEST(Reports, FormatsAndDetCsv) {
  std::vector<ScoreRecord> recs = {{"a", 2.0, TrialKey::kBonafide},
                                   {"b", 0.0, TrialKey::kBonafide},
                                   {"c", 1.0, TrialKey::kSpoof},
                                   {"d", -1.0, TrialKey::kSpoof}};
  const MetricReport r = Evaluate(recs, 1.0);
  EXPECT_EQ(r.n_bonafide, 2u);
  EXPECT_EQ(r.n_spoof, 2u);
  EXPECT_NEAR(r.eer, 0.5, 1e-15);
  EXPECT_EQ(r.min_tdcf, 0.5);

  const std::string kv = FormatReportKeyValue(r);
  EXPECT_NE(kv.find("n_bonafide=2\n"), std::string::npos);
  EXPECT_NE(kv.find("eer=0.5\n"), std::string::npos);
  EXPECT_NE(kv.find("eer_percent=50\n"), std::string::npos);
  EXPECT_NE(kv.find("min_tdcf=0.5\n"), std::string::npos);
  EXPECT_NE(FormatReportText(r).find("EER         50 %"), std::string::npos);

  std::ostringstream csv;
  WriteDetCsv(csv, r.det);
  std::istringstream lines(csv.str());
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "threshold,e_fr,e_fa");
  std::size_t rows = 0;
  while (std::getline(lines, line)) ++rows;
  EXPECT_EQ(rows, r.det.size());
  EXPECT_EQ(r.det.size(), 6u);
}

}  // namespace
}  // namespace fusioncm
