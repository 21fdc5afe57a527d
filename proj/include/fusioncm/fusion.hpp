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
#include <span>
#include <string>
#include <vector>

namespace fusioncm {

struct FusionMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;  // row-major

  double at(std::size_t r, std::size_t c) const { return values[r * width + c]; }
};

// [face || speech] reshaped row-major into height x width.
FusionMap ConcatFuse(std::span<const double> face, std::span<const double> speech,
                     std::size_t height, std::size_t width);

struct FusionWeights {
  double face = 0.1;
  double speech = 0.9;

  void Validate() const;
};

double WeightedAverage(double face_score, double speech_score, const FusionWeights &w);

// log p(bonafide) - log p(spoof) from a 2-entry log distribution.
double CmScore(std::span<const double> log_probs);

enum class ScoreSpace {
  kProbability,  // average bona fide probabilities, then take the log ratio
  kLlr,          // average the per-stream log-likelihood ratios
};

ScoreSpace ParseScoreSpace(const std::string &name);

// Back-end fusion of two 2-class log distributions into one CM score.
double FuseBackEnd(std::span<const double> face_log_probs, std::span<const double> speech_log_probs,
                   const FusionWeights &w, ScoreSpace space);

}  // namespace fusioncm
