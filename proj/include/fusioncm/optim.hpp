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

#include <cstdint>
#include <span>
#include <vector>

#include "fusioncm/tensor.hpp"

namespace fusioncm::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void Validate() const;
};

struct AdamState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;
};

// One bias-corrected Adam update using each tensor's `grad`. Throws
// kNumeric, without touching any parameter, if a gradient is non-finite.
void AdamStep(std::span<Tensor *const> params, AdamState &state, const AdamConfig &cfg);

struct LossResult {
  double value = 0.0;
  Tensor grad;  // d loss / d input, same shape as the input
};

// Mean negative log-likelihood of the true class over an N x 2 matrix of
// log-probabilities; label 0 = bona fide, 1 = spoof.
LossResult BceLoss(const Tensor &log_probs, std::span<const int> labels);

enum class PretrainForm {
  kLiteral,             // (||v_f|| - ||v_s||)^2
  kNormalizedDistance,  // || v_f/||v_f|| - v_s/||v_s|| ||^2
};

// Single pair; grad is with respect to v_s.
LossResult PretrainLoss(std::span<const double> target, std::span<const double> predicted,
                        PretrainForm form);

// Batched: targets and predictions are N x D, loss is the batch mean.
LossResult PretrainLossBatch(const Tensor &targets, const Tensor &predicted, PretrainForm form);

}  // namespace fusioncm::nn
