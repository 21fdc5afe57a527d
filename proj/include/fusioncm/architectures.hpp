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
#include <string>
#include <utility>
#include <vector>

#include "fusioncm/model.hpp"

// Network builders. Activations are N x C x T x F (time rows, frequency
// columns). Class index 0 is bona fide, 1 is spoof. Models that score expose
// "log_probs" and "probs" outputs; embedding models expose "embedding".
namespace fusioncm::arch {

using nn::Model;
using nn::NodeId;

// Multiplies a full-scale width by `scale`; the product must be a positive
// integer or a kConfig error names `what`.
std::size_t ScaleWidth(std::size_t full, double scale, const std::string &what);

struct SeBlockConfig {
  std::size_t channels = 0;
  std::size_t reduction = 16;

  std::size_t bottleneck() const { return channels / reduction > 0 ? channels / reduction : 1; }
};

// squeeze (GAP) -> fc(C -> C/r) -> relu -> fc(C/r -> C) -> sigmoid -> scale.
// Layer names: <name>.squeeze, .fc1, .relu, .fc2, .gate, .scale.
NodeId AddSeBlock(Model &m, NodeId x, const SeBlockConfig &cfg, const std::string &name);

struct DenseBlockConfig {
  std::size_t num_layers = 3;
  std::size_t growth_rate = 32;
  std::size_t kernel = 3;
  double leaky_slope = 0.01;
};

struct DenseBlockInfo {
  NodeId output = 0;
  std::vector<std::size_t> layer_input_channels;
  std::size_t output_channels = 0;
  std::size_t direct_connections = 0;
};

// Number of direct input edges in an L-layer block: layer l reads l tensors.
constexpr std::size_t DenseConnectionCount(std::size_t num_layers) {
  return num_layers * (num_layers + 1) / 2;
}

// Layer l: concat(x0..x_{l-1}) -> batchnorm -> leaky relu -> conv. Output is
// concat(x0, x1..xL). Layer names: <name>.l<i>.{cat,bn,act,conv}, <name>.out.
DenseBlockInfo AddDenseBlock(Model &m, NodeId x, const DenseBlockConfig &cfg,
                             const std::string &name);

// 1x1 conv that keeps floor(C * compression) channels (at least one).
NodeId AddTransition(Model &m, NodeId x, double compression, const std::string &name);

struct Res2NetBlockConfig {
  std::size_t width = 0;         // channels after the first 1x1 conv
  std::size_t out_channels = 0;  // channels after the last 1x1 conv
  std::size_t scale = 4;
  bool squeeze_excite = true;
  std::size_t se_reduction = 16;
};

// 1x1 conv/bn/relu -> split into s groups -> y1 = x1, y2 = K2(x2),
// yi = Ki(xi + y(i-1)) -> concat -> 1x1 conv/bn -> [SE] -> + shortcut -> relu.
// Ki is 3x3 conv/bn/relu. The shortcut is a 1x1 conv/bn projection when the
// channel count changes.
NodeId AddRes2NetBlock(Model &m, NodeId x, const Res2NetBlockConfig &cfg, const std::string &name);

enum class EncoderVariant { kLa, kPa };

struct VoiceEncoderConfig {
  EncoderVariant variant = EncoderVariant::kLa;
  double scale = 1.0;
  std::size_t freq_bins = 257;
  std::size_t input_channels = 2;
};

inline constexpr std::size_t kEncoderChannels[9] = {64, 64, 128, 128, 128, 256, 512, 512, 512};
inline constexpr std::size_t kEncoderEmbedding = 4096;
// Product of the four 2x1 time pools.
inline constexpr std::size_t kEncoderMinTime = 16;

std::size_t EncoderEmbeddingDim(const VoiceEncoderConfig &cfg);

// LA marks "embedding"; PA marks "log_probs" and "probs". Both mark "pooled".
Model BuildVoiceEncoder(const VoiceEncoderConfig &cfg);

struct SeDenseNetConfig {
  double scale = 1.0;
  std::size_t coefficients = 20;  // input columns (LFCC order + 1)
  std::size_t stem_channels = 32;
  std::size_t growth_rate = 32;
  std::size_t embedding = 128;
  double compression = 0.5;
  std::size_t se_reduction = 16;
};

inline constexpr std::size_t kDenseBlockLayers[4] = {3, 3, 3, 2};

// Marks "embedding", "log_probs", "probs".
Model BuildSeDenseNet(const SeDenseNetConfig &cfg);

struct SeRes2NetConfig {
  double scale = 1.0;
  std::size_t cqt_bins = 84;
  std::vector<std::size_t> stage_widths = {16, 32, 64, 128};
  std::size_t blocks_per_stage = 1;
  std::size_t res2_scale = 4;
  std::size_t se_reduction = 16;
};

// Marks "log_probs", "probs".
Model BuildSeRes2Net(const SeRes2NetConfig &cfg);

struct ClassifierConfig {
  double scale = 1.0;
  std::size_t height = 64;
  std::size_t width = 66;
  std::size_t stem_channels = 32;
  std::size_t growth_rate = 32;
  std::size_t hidden = 128;
  double dropout = 0.5;
  double compression = 0.5;
  std::size_t se_reduction = 16;
};

// Marks "log_probs", "probs" and the spatial checkpoints "stage0".."stage4".
Model BuildClassifier(const ClassifierConfig &cfg);

// (H, W) at stage0..stage4 of a classifier built by BuildClassifier.
std::vector<std::pair<std::size_t, std::size_t>> ClassifierSpatialTrace(const Model &m);

}  // namespace fusioncm::arch
