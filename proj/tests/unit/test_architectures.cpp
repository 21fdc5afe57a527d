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

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "fusioncm/architectures.hpp"
#include "fusioncm/errors.hpp"
#include "support/block_oracles.hpp"
#include "support/common.hpp"
#include "support/gradient_suite.hpp"

namespace fusioncm {
namespace {

using nn::Model;
using nn::Shape;
using nn::Tensor;
using testing::RandomTensor;

ErrorKind KindOf(const std::function<void()> &fn) {
  try {
    fn();
  } catch (const Error &e) {
    return e.kind();
  }
  ADD_FAILURE() << "no fusioncm::Error thrown";
  return ErrorKind::kIo;
}

class BlockGradient : public ::testing::TestWithParam<std::size_t> {};

TEST_P(BlockGradient, FiniteDifferences) {
  const auto c = testing::BlockGradCases().at(GetParam());
  const auto r = c.run();
  EXPECT_GT(r.checked, 0u) << c.name;
  EXPECT_LT(r.max_rel_error, 1e-3) << c.name << " worst " << r.worst;
}

INSTANTIATE_TEST_SUITE_P(AllBlocks, BlockGradient,
                         ::testing::Range<std::size_t>(0, testing::BlockGradCases().size()),
                         [](const auto &info) { return testing::BlockGradCases().at(info.param).name; });

TEST(SeBlock, MatchesLiteralAndGateIsBounded) {
  Rng rng(1);
  for (std::size_t channels : {1u, 5u, 16u, 33u}) {
    Model m({channels, 3, 4});
    arch::SeBlockConfig cfg{channels, 16};
    const auto y = arch::AddSeBlock(m, m.input(), cfg, "se");
    m.Initialize(2);
    testing::RandomizeState(m, rng);
    const Tensor x = RandomTensor({2, channels, 3, 4}, rng);
    Tensor gate;
    const Tensor ref = testing::LiteralSe(m, "se", x, &gate);
    const nn::Trace t = m.InferAll(x);
    EXPECT_LT(testing::MaxAbsDiff(t.at(y), ref), 1e-12);
    for (double g : t.at(m.Find("se.gate")).data) {
      EXPECT_GT(g, 0.0);
      EXPECT_LT(g, 1.0);
    }
    EXPECT_EQ(cfg.bottleneck(), std::max<std::size_t>(1, channels / 16));
  }
}

TEST(SeBlock, SaturatedGatePassesOrZeroesInput) {
  Rng rng(3);
  Model m({4, 2, 2});
  const auto y = arch::AddSeBlock(m, m.input(), {4, 2}, "se");
  m.Initialize(4);
  auto &fc2 = testing::LayerAs<nn::FullyConnected>(m, "se.fc2");
  const Tensor x = RandomTensor({1, 4, 2, 2}, rng);
  for (double &b : fc2.bias().data) b = 1e3;
  EXPECT_EQ(m.Infer(x, y).data, x.data);
  for (double &b : fc2.bias().data) b = -1e3;
  for (double v : m.Infer(x, y).data) EXPECT_EQ(v, 0.0);
}

TEST(DenseBlock, ChannelBookkeepingAndConnectionCount) {
  for (std::size_t layers : {1u, 2u, 3u, 5u}) {
    for (std::size_t c0 : {1u, 7u, 32u}) {
      Model m({c0, 4, 4});
      arch::DenseBlockConfig cfg;
      cfg.num_layers = layers;
      cfg.growth_rate = 32;
      const auto info = arch::AddDenseBlock(m, m.input(), cfg, "d");
      ASSERT_EQ(info.layer_input_channels.size(), layers);
      for (std::size_t l = 1; l <= layers; ++l) EXPECT_EQ(info.layer_input_channels[l - 1], c0 + (l - 1) * 32);
      EXPECT_EQ(info.output_channels, c0 + layers * 32);
      EXPECT_EQ(info.direct_connections, arch::DenseConnectionCount(layers));
      EXPECT_EQ(info.direct_connections, layers * (layers + 1) / 2);
    }
  }
}

TEST(DenseBlock, MatchesLiteral) {
  Rng rng(5);
  Model m({3, 4, 5});
  arch::DenseBlockConfig cfg;
  cfg.growth_rate = 2;
  const auto info = arch::AddDenseBlock(m, m.input(), cfg, "d");
  m.Initialize(6);
  testing::RandomizeState(m, rng);
  const Tensor x = RandomTensor({2, 3, 4, 5}, rng);
  EXPECT_LT(testing::MaxAbsDiff(m.Infer(x, info.output), testing::LiteralDenseBlock(m, "d", x, 3)), 1e-12);
}

TEST(Res2NetBlock, MatchesLiteralForEveryScale) {
  Rng rng(7);
  for (std::size_t s : {1u, 2u, 4u}) {
    for (bool proj : {false, true}) {
      const std::size_t c_in = proj ? 3 : 8;
      Model m({c_in, 4, 4});
      arch::Res2NetBlockConfig cfg;
      cfg.width = 8;
      cfg.out_channels = 8;
      cfg.scale = s;
      cfg.se_reduction = 4;
      const auto y = arch::AddRes2NetBlock(m, m.input(), cfg, "r");
      m.Initialize(8);
      testing::RandomizeState(m, rng);
      const Tensor x = RandomTensor({2, c_in, 4, 4}, rng);
      EXPECT_LT(testing::MaxAbsDiff(m.Infer(x, y), testing::LiteralRes2NetBlock(m, "r", x, s, true, proj)), 1e-12)
          << "s=" << s << " proj=" << proj;
    }
  }
}

// With s = 1 the block is 1x1 -> identity -> 1x1 plus the shortcut.
TEST(Res2NetBlock, ScaleOneIsPlainBottleneck) {
  Rng rng(9);
  Model r({6, 3, 5});
  arch::Res2NetBlockConfig cfg;
  cfg.width = 4;
  cfg.out_channels = 6;
  cfg.scale = 1;
  cfg.squeeze_excite = false;
  const auto ry = arch::AddRes2NetBlock(r, r.input(), cfg, "b");
  r.Initialize(10);
  testing::RandomizeState(r, rng);

  Model p({6, 3, 5});
  nn::Conv2dOptions c1;
  c1.in_channels = 6;
  c1.out_channels = 4;
  c1.kernel_h = c1.kernel_w = 1;
  c1.bias = false;
  nn::Conv2dOptions c3 = c1;
  c3.in_channels = 4;
  c3.out_channels = 6;
  auto h = p.Relu(p.BatchNorm(p.Conv(p.input(), c1, "b.conv1"), "b.bn1"), "b.relu1");
  h = p.BatchNorm(p.Conv(h, c3, "b.conv3"), "b.bn3");
  const auto py = p.Relu(p.Add(h, p.input(), "b.add"), "b.relu_out");
  p.Initialize(11);
  auto src = r.NamedState();
  for (auto &[name, t] : p.NamedState()) {
    auto it = std::find_if(src.begin(), src.end(), [&](const auto &kv) { return kv.first == name; });
    ASSERT_NE(it, src.end()) << name;
    t->data = it->second->data;
  }
  const Tensor x = RandomTensor({2, 6, 3, 5}, rng);
  EXPECT_LT(testing::MaxAbsDiff(r.Infer(x, ry), p.Infer(x, py)), 1e-12);
  EXPECT_EQ(r.CountLayers(nn::LayerKind::kSliceChannels), 0u);
}

TEST(Res2NetBlock, RejectsIndivisibleWidth) {
  Model m({4, 4, 4});
  arch::Res2NetBlockConfig cfg;
  cfg.width = 6;
  cfg.out_channels = 4;
  cfg.scale = 4;
  EXPECT_EQ(KindOf([&] { arch::AddRes2NetBlock(m, m.input(), cfg, "r"); }), ErrorKind::kConfig);
}

TEST(VoiceEncoder, FullScaleDimensions) {
  arch::VoiceEncoderConfig la;
  Model m = arch::BuildVoiceEncoder(la);
  EXPECT_EQ(m.SampleShape(m.Output("embedding")), (Shape{4096}));
  EXPECT_EQ(m.SampleShape(m.Find("fc1")), (Shape{4096}));
  EXPECT_EQ(m.CountLayers(nn::LayerKind::kConv2d), 9u);
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_EQ(m.Channels(m.Find("conv" + std::to_string(i + 1))), arch::kEncoderChannels[i]);
  }
  arch::VoiceEncoderConfig pa;
  pa.variant = arch::EncoderVariant::kPa;
  Model p = arch::BuildVoiceEncoder(pa);
  EXPECT_EQ(p.SampleShape(p.Output("probs")), (Shape{2}));
  EXPECT_FALSE(p.HasOutput("embedding"));
}

TEST(VoiceEncoder, OutputDimensionIndependentOfTime) {
  arch::VoiceEncoderConfig c;
  c.scale = 1.0 / 64.0;
  c.freq_bins = 9;
  Model m = arch::BuildVoiceEncoder(c);
  m.Initialize(1);
  Rng rng(2);
  Rng pick(3);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t t = arch::kEncoderMinTime + pick.UniformInt(100);
    const Tensor y = m.Infer(RandomTensor({1, 2, t, 9}, rng), m.Output("embedding"));
    EXPECT_EQ(y.shape, (Shape{1, 64})) << t;
    EXPECT_TRUE(y.AllFinite());
  }
  EXPECT_EQ(KindOf([&] { (void)m.Infer(RandomTensor({1, 2, arch::kEncoderMinTime - 1, 9}, rng)); }),
            ErrorKind::kShape);
}

TEST(SeDenseNet, FullScaleEmbeddingAndBlockChannels) {
  Model m = arch::BuildSeDenseNet({});
  EXPECT_EQ(m.SampleShape(m.Output("embedding")), (Shape{128}));
  // Block inputs 32, 64, 80, 88: each transition halves the previous block output.
  const std::size_t expected_in[4] = {32, 64, 80, 88};
  for (std::size_t b = 0; b < 4; ++b) {
    const std::string p = "block" + std::to_string(b + 1) + ".dense";
    for (std::size_t l = 2; l <= arch::kDenseBlockLayers[b]; ++l) {
      EXPECT_EQ(m.Channels(m.Find(p + ".l" + std::to_string(l) + ".cat")), expected_in[b] + (l - 1) * 32);
    }
    EXPECT_EQ(m.Channels(m.Find(p + ".out")), expected_in[b] + arch::kDenseBlockLayers[b] * 32);
  }
}

TEST(Classifier, FullScaleSpatialTrace) {
  Model m = arch::BuildClassifier({});
  const auto trace = arch::ClassifierSpatialTrace(m);
  const std::vector<std::pair<std::size_t, std::size_t>> want{{64, 66}, {32, 33}, {16, 16}, {8, 8}, {1, 1}};
  EXPECT_EQ(trace, want);
  EXPECT_EQ(m.SampleShape(m.Output("probs")), (Shape{2}));
  EXPECT_EQ(m.sample_shape(), (Shape{1, 64, 66}));
}

TEST(SeRes2Net, ShapesAndMinimumTime) {
  Model m = arch::BuildSeRes2Net({});
  EXPECT_EQ(m.SampleShape(m.Output("log_probs")), (Shape{2}));
  EXPECT_EQ(m.min_shape(), (Shape{1, 8, 84}));
  for (std::size_t st = 1; st <= 4; ++st) {
    EXPECT_EQ(m.Channels(m.Find("stage" + std::to_string(st) + ".block1.relu_out")), 16u << (st - 1));
  }
}

TEST(Builders, ScaleValidation) {
  EXPECT_EQ(arch::ScaleWidth(64, 0.125, "x"), 8u);
  EXPECT_EQ(KindOf([] { arch::ScaleWidth(64, 0.01, "x"); }), ErrorKind::kConfig);
  EXPECT_EQ(KindOf([] { arch::ScaleWidth(64, 0.3, "x"); }), ErrorKind::kConfig);
  arch::ClassifierConfig c;
  c.height = 4;
  EXPECT_EQ(KindOf([&] { arch::BuildClassifier(c); }), ErrorKind::kConfig);
  Model m({4, 2, 2});
  EXPECT_EQ(KindOf([&] { arch::AddSeBlock(m, m.input(), {5, 16}, "se"); }), ErrorKind::kShape);
}

}  // namespace
}  // namespace fusioncm
