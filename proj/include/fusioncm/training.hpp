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
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fusioncm/model.hpp"
#include "fusioncm/optim.hpp"

namespace fusioncm::train {

enum class LossKind { kPretrainL2, kBce };

struct TrainConfig {
  nn::AdamConfig optimizer;
  std::size_t epochs = 1;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::kBce;
  nn::PretrainForm pretrain_form = nn::PretrainForm::kNormalizedDistance;
  // Save a checkpoint every N epochs when both are set.
  std::size_t checkpoint_every = 0;
  std::filesystem::path checkpoint_path;

  void Validate() const;
};

// Learning rates and epoch counts used for the three trained networks:
// "voice_encoder", "se_densenet", "se_res2net".
double PresetLearningRate(const std::string &network);
std::size_t PresetEpochs(const std::string &network);

// All inputs share one per-sample shape (no batch axis).
struct PretrainSet {
  std::vector<nn::Tensor> inputs;
  std::vector<std::vector<double>> targets;
};

struct LabeledSet {
  std::vector<nn::Tensor> inputs;
  std::vector<int> labels;  // 0 bona fide, 1 spoof
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  std::optional<double> val_eer;
};

// "epoch loss[ val_eer]".
std::string FormatEpochLog(const EpochLog &log);

using LogSink = std::function<void(const EpochLog &)>;

// Stacks per-sample tensors along a new leading batch axis.
nn::Tensor Stack(std::span<const nn::Tensor *const> samples);

// Eval-mode outputs of `node` for every input, one row per sample.
std::vector<std::vector<double>> InferRows(const nn::Model &model, std::span<const nn::Tensor> inputs,
                                           nn::NodeId node, std::size_t batch_size = 32);

// Regresses the "embedding" output onto `data.targets`.
std::vector<EpochLog> TrainVoiceEncoder(nn::Model &model, const PretrainSet &data,
                                        const TrainConfig &cfg, const LogSink &sink = {});

// BCE on the "log_probs" output. When `validation` is given its EER is
// logged each epoch.
std::vector<EpochLog> TrainClassifier(nn::Model &model, const LabeledSet &data, const TrainConfig &cfg,
                                      const LabeledSet *validation = nullptr,
                                      const LogSink &sink = {});

// EER of CM scores from the "log_probs" output.
double EvaluateEer(const nn::Model &model, const LabeledSet &data);

}  // namespace fusioncm::train
