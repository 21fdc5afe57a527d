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

#include "fusioncm/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fusioncm/errors.hpp"

namespace fusioncm {

namespace {

double LogSumExp(double a, double b) {
  const double m = std::max(a, b);
  if (m == -std::numeric_limits<double>::infinity()) return m;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

void CheckLogDistribution(std::span<const double> lp) {
  if (lp.size() != 2) Fail(ErrorKind::kShape, "expected 2 class log-probabilities");
  if (std::isnan(lp[0]) || std::isnan(lp[1]) || lp[0] > 0.0 || lp[1] > 0.0) {
    Fail(ErrorKind::kParameter, "log-probabilities must be finite and non-positive");
  }
  if (std::abs(LogSumExp(lp[0], lp[1])) > 1e-6) {
    Fail(ErrorKind::kParameter, "log-probabilities do not sum to one");
  }
}

}  // namespace

FusionMap ConcatFuse(std::span<const double> face, std::span<const double> speech,
                     std::size_t height, std::size_t width) {
  if (face.size() + speech.size() != height * width || height == 0) {
    Fail(ErrorKind::kShape, std::to_string(face.size()) + " + " + std::to_string(speech.size()) +
                                " features cannot fill a " + std::to_string(height) + "x" +
                                std::to_string(width) + " map");
  }
  FusionMap m;
  m.height = height;
  m.width = width;
  m.values.reserve(height * width);
  m.values.insert(m.values.end(), face.begin(), face.end());
  m.values.insert(m.values.end(), speech.begin(), speech.end());
  return m;
}

void FusionWeights::Validate() const {
  if (!(face >= 0.0) || !(speech >= 0.0) || std::abs(face + speech - 1.0) > 1e-12) {
    Fail(ErrorKind::kParameter, "fusion weights must be non-negative and sum to 1");
  }
}

double WeightedAverage(double face_score, double speech_score, const FusionWeights &w) {
  w.Validate();
  return w.face * face_score + w.speech * speech_score;
}

double CmScore(std::span<const double> log_probs) {
  CheckLogDistribution(log_probs);
  return log_probs[0] - log_probs[1];
}

ScoreSpace ParseScoreSpace(const std::string &name) {
  if (name == "probability") return ScoreSpace::kProbability;
  if (name == "llr") return ScoreSpace::kLlr;
  Fail(ErrorKind::kConfig, "unknown fusion score space '" + name + "' (probability|llr)");
}

double FuseBackEnd(std::span<const double> face_log_probs, std::span<const double> speech_log_probs,
                   const FusionWeights &w, ScoreSpace space) {
  w.Validate();
  CheckLogDistribution(face_log_probs);
  CheckLogDistribution(speech_log_probs);
  if (space == ScoreSpace::kLlr) {
    return WeightedAverage(CmScore(face_log_probs), CmScore(speech_log_probs), w);
  }
  // Each class probability is averaged in log space so tiny values keep
  // their precision.
  const double lwf = w.face > 0.0 ? std::log(w.face) : -std::numeric_limits<double>::infinity();
  const double lws = w.speech > 0.0 ? std::log(w.speech) : -std::numeric_limits<double>::infinity();
  const double lb = LogSumExp(lwf + face_log_probs[0], lws + speech_log_probs[0]);
  const double ls = LogSumExp(lwf + face_log_probs[1], lws + speech_log_probs[1]);
  return lb - ls;
}

}  // namespace fusioncm
