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

// Finite-difference checks over every layer kind and every assembled block
// at tiny widths. Shared by the unit tests and the acceptance binary.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "fusioncm/architectures.hpp"
#include "fusioncm/layers.hpp"
#include "fusioncm/model.hpp"
#include "support/common.hpp"
#include "support/gradcheck.hpp"

namespace fusioncm::testing {

struct GradCase {
  std::string name;
  std::function<GradCheckResult()> run;
};

inline std::vector<GradCase> LayerGradCases() {
  using namespace nn;
  std::vector<GradCase> cases;
  auto add = [&](std::string name, std::function<GradCheckResult()> fn) {
    cases.push_back({std::move(name), std::move(fn)});
  };
  add("conv2d", [] {
    Rng rng(101);
    Conv2dOptions o;
    o.in_channels = 2;
    o.out_channels = 3;
    o.kernel_h = o.kernel_w = 4;
    o.stride_h = o.stride_w = 2;
    o.pad_top = o.pad_left = 1;
    o.pad_bottom = o.pad_right = 2;
    Conv2d l(o);
    l.InitParameters(rng);
    return CheckLayer(l, {RandomTensor({2, 2, 6, 5}, rng)}, 1);
  });
  add("batchnorm", [] {
    Rng rng(102);
    BatchNorm l(3);
    l.InitParameters(rng);
    for (double &g : l.gamma().data) g = rng.Uniform(0.5, 1.5);
    return CheckLayer(l, {RandomTensor({3, 3, 2, 2}, rng)}, 2);
  });
  add("relu", [] {
    Rng rng(103);
    Relu l;
    return CheckLayer(l, {AwayFromZero({2, 2, 3, 3}, rng)}, 3);
  });
  add("leaky_relu", [] {
    Rng rng(104);
    LeakyRelu l(0.01);
    return CheckLayer(l, {AwayFromZero({2, 2, 3, 3}, rng)}, 4);
  });
  add("sigmoid", [] {
    Rng rng(105);
    Sigmoid l;
    return CheckLayer(l, {RandomTensor({2, 6}, rng, -3.0, 3.0)}, 5);
  });
  add("max_pool", [] {
    Rng rng(106);
    MaxPool l({2, 2, 2, 2});
    return CheckLayer(l, {RandomTensor({2, 2, 5, 7}, rng)}, 6);
  });
  add("avg_pool", [] {
    Rng rng(107);
    AvgPool l({2, 2, 2, 2});
    return CheckLayer(l, {RandomTensor({2, 2, 5, 7}, rng)}, 7);
  });
  add("global_avg_pool_time", [] {
    Rng rng(108);
    GlobalAvgPoolTime l;
    return CheckLayer(l, {RandomTensor({2, 3, 4, 5}, rng)}, 8);
  });
  add("global_avg_pool", [] {
    Rng rng(109);
    GlobalAvgPool l;
    return CheckLayer(l, {RandomTensor({2, 3, 4, 5}, rng)}, 9);
  });
  add("fully_connected", [] {
    Rng rng(110);
    FullyConnected l(12, 4);
    l.InitParameters(rng);
    return CheckLayer(l, {RandomTensor({3, 2, 2, 3}, rng)}, 10);
  });
  add("softmax", [] {
    Rng rng(111);
    Softmax l;
    return CheckLayer(l, {RandomTensor({3, 4}, rng, -2.0, 2.0)}, 11);
  });
  add("log_softmax", [] {
    Rng rng(112);
    LogSoftmax l;
    return CheckLayer(l, {RandomTensor({3, 2}, rng, -2.0, 2.0)}, 12);
  });
  add("dropout", [] {
    Rng rng(113);
    Dropout l(0.5);
    return CheckLayer(l, {RandomTensor({2, 3, 2, 2}, rng)}, 13);
  });
  add("concat", [] {
    Rng rng(114);
    Concat l(3);
    return CheckLayer(l, {RandomTensor({2, 1, 2, 3}, rng), RandomTensor({2, 2, 2, 3}, rng),
                          RandomTensor({2, 1, 2, 3}, rng)},
                      14);
  });
  add("add", [] {
    Rng rng(115);
    Add l;
    return CheckLayer(l, {RandomTensor({2, 2, 2, 3}, rng), RandomTensor({2, 2, 2, 3}, rng)}, 15);
  });
  add("reshape", [] {
    Rng rng(116);
    Reshape l({1, 3, 4});
    return CheckLayer(l, {RandomTensor({2, 12}, rng)}, 16);
  });
  add("channel_scale", [] {
    Rng rng(117);
    ChannelScale l;
    return CheckLayer(l, {RandomTensor({2, 3, 2, 2}, rng), RandomTensor({2, 3}, rng)}, 17);
  });
  add("slice_channels", [] {
    Rng rng(118);
    SliceChannels l(1, 2);
    return CheckLayer(l, {RandomTensor({2, 4, 2, 3}, rng)}, 18);
  });
  return cases;
}

// Biases and batchnorm affines are redrawn after Initialize: zero biases put
// units exactly on an activation kink whenever dropout clears their input.
inline void PerturbAffine(nn::Model &m, Rng &rng) {
  auto ends_with = [](const std::string &s, const std::string &suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  for (auto &[name, t] : m.NamedState()) {
    if (ends_with(name, ".bias") || ends_with(name, ".beta")) {
      for (double &v : t->data) v = rng.Uniform(-0.1, 0.1);
    } else if (ends_with(name, ".gamma")) {
      for (double &v : t->data) v = rng.Uniform(0.8, 1.2);
    }
  }
}

inline GradCheckResult CheckBlockModel(nn::Model &m, nn::NodeId out, nn::Shape input, std::uint64_t seed) {
  m.Initialize(seed);
  Rng rng(seed + 1);
  PerturbAffine(m, rng);
  return CheckModel(m, out, RandomTensor(std::move(input), rng), seed + 2);
}

inline std::vector<GradCase> BlockGradCases() {
  using namespace arch;
  std::vector<GradCase> cases;
  auto add = [&](std::string name, std::function<GradCheckResult()> fn) {
    cases.push_back({std::move(name), std::move(fn)});
  };
  add("se_block", [] {
    nn::Model m({4, 3, 3});
    const auto y = AddSeBlock(m, m.input(), {4, 2}, "se");
    return CheckBlockModel(m, y, {2, 4, 3, 3}, 201);
  });
  add("dense_block", [] {
    nn::Model m({3, 4, 4});
    DenseBlockConfig c;
    c.num_layers = 3;
    c.growth_rate = 2;
    const auto info = AddDenseBlock(m, m.input(), c, "dense");
    return CheckBlockModel(m, info.output, {2, 3, 4, 4}, 202);
  });
  add("transition", [] {
    nn::Model m({6, 3, 3});
    const auto y = AddTransition(m, m.input(), 0.5, "t");
    return CheckBlockModel(m, y, {2, 6, 3, 3}, 203);
  });
  add("res2net_block_projection", [] {
    nn::Model m({3, 4, 4});
    Res2NetBlockConfig c;
    c.width = 8;
    c.out_channels = 6;
    c.scale = 4;
    c.se_reduction = 2;
    const auto y = AddRes2NetBlock(m, m.input(), c, "r2");
    return CheckBlockModel(m, y, {2, 3, 4, 4}, 204);
  });
  add("res2net_block_identity", [] {
    nn::Model m({4, 4, 4});
    Res2NetBlockConfig c;
    c.width = 4;
    c.out_channels = 4;
    c.scale = 2;
    c.se_reduction = 2;
    const auto y = AddRes2NetBlock(m, m.input(), c, "r2");
    return CheckBlockModel(m, y, {2, 4, 4, 4}, 205);
  });
  add("voice_encoder_la", [] {
    VoiceEncoderConfig c;
    c.scale = 1.0 / 64.0;
    c.freq_bins = 6;
    nn::Model m = BuildVoiceEncoder(c);
    return CheckBlockModel(m, m.Output("embedding"), {2, 2, kEncoderMinTime, 6}, 206);
  });
  add("voice_encoder_pa", [] {
    VoiceEncoderConfig c;
    c.variant = EncoderVariant::kPa;
    c.scale = 1.0 / 64.0;
    c.freq_bins = 5;
    nn::Model m = BuildVoiceEncoder(c);
    return CheckBlockModel(m, m.Output("log_probs"), {2, 2, kEncoderMinTime + 3, 5}, 207);
  });
  add("se_densenet", [] {
    SeDenseNetConfig c;
    c.scale = 1.0 / 32.0;
    c.coefficients = 5;
    nn::Model m = BuildSeDenseNet(c);
    return CheckBlockModel(m, m.Output("log_probs"), {2, 1, 4, 5}, 208);
  });
  add("se_res2net", [] {
    SeRes2NetConfig c;
    c.cqt_bins = 6;
    c.stage_widths = {4, 8};
    c.res2_scale = 2;
    nn::Model m = BuildSeRes2Net(c);
    return CheckBlockModel(m, m.Output("log_probs"), {2, 1, 4, 6}, 209);
  });
  add("classifier", [] {
    ClassifierConfig c;
    c.scale = 1.0 / 32.0;
    c.height = 8;
    c.width = 10;
    nn::Model m = BuildClassifier(c);
    return CheckBlockModel(m, m.Output("log_probs"), {2, 1, 8, 10}, 210);
  });
  return cases;
}

}  // namespace fusioncm::testing
