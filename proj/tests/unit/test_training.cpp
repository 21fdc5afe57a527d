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
#include <vector>

#include <gtest/gtest.h>

#include "fusioncm/architectures.hpp"
#include "fusioncm/errors.hpp"
#include "fusioncm/model.hpp"
#include "fusioncm/rng.hpp"
#include "fusioncm/training.hpp"
#include "support/common.hpp"

namespace fusioncm::train {
namespace {

using nn::Model;
using nn::Shape;
using nn::Tensor;

ErrorKind KindOf(const std::function<void()> &fn) {
  try {
    fn();
  } catch (const Error &e) {
    return e.kind();
  }
  ADD_FAILURE() << "no fusioncm::Error thrown";
  return ErrorKind::kIo;
}

// 1x6x4 input, conv/bn/relu, global pooling, then a `dim`-wide head.
Model TinyEncoder(std::size_t dim) {
  Model m({1, 6, 4});
  nn::Conv2dOptions c;
  c.out_channels = 4;
  c.kernel_h = c.kernel_w = 3;
  c.pad_top = c.pad_bottom = c.pad_left = c.pad_right = 1;
  auto x = m.Conv(m.input(), c, "conv");
  x = m.BatchNorm(x, "bn");
  x = m.Relu(x, "relu");
  x = m.GlobalAvgPool(x, "gap");
  x = m.Dense(x, dim, "fc");
  m.MarkOutput("embedding", x);
  return m;
}

Model TinyClassifier() {
  Model m({1, 6, 4});
  nn::Conv2dOptions c;
  c.out_channels = 4;
  c.kernel_h = c.kernel_w = 3;
  c.pad_top = c.pad_bottom = c.pad_left = c.pad_right = 1;
  auto x = m.Conv(m.input(), c, "conv");
  x = m.BatchNorm(x, "bn");
  x = m.LeakyRelu(x, "act");
  x = m.GlobalAvgPool(x, "gap");
  x = m.Dropout(x, 0.25, "drop");
  x = m.Dense(x, 2, "fc");
  m.MarkOutput("log_probs", m.LogSoftmax(x, "log_probs"));
  return m;
}

std::vector<double> Snapshot(Model &m) {
  std::vector<double> out;
  for (auto &[name, t] : m.NamedState()) out.insert(out.end(), t->data.begin(), t->data.end());
  return out;
}

LabeledSet SeparableSet(std::size_t n, Rng &rng) {
  LabeledSet s;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    Tensor x = testing::RandomTensor({1, 6, 4}, rng, -0.5, 0.5);
    // The class is a sign flip of a fixed pattern.
    for (std::size_t k = 0; k < x.size(); ++k) x.data[k] += (label == 0 ? 1.0 : -1.0) * ((k % 3) - 1.0);
    s.inputs.push_back(std::move(x));
    s.labels.push_back(label);
  }
  return s;
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.Validate();
  c.batch_size = 0;
  EXPECT_EQ(KindOf([&] { c.Validate(); }), ErrorKind::kConfig);
  c.batch_size = 1;
  c.epochs = 0;
  EXPECT_EQ(KindOf([&] { c.Validate(); }), ErrorKind::kConfig);
  c.epochs = 1;
  c.optimizer.learning_rate = -1.0;
  EXPECT_EQ(KindOf([&] { c.Validate(); }), ErrorKind::kParameter);
}

TEST(TrainConfig, Presets) {
  EXPECT_EQ(PresetLearningRate("voice_encoder"), 0.001);
  EXPECT_EQ(PresetLearningRate("se_densenet"), 0.0005);
  EXPECT_EQ(PresetLearningRate("se_res2net"), 0.0003);
  EXPECT_EQ(PresetEpochs("se_densenet"), 200u);
  EXPECT_EQ(PresetEpochs("se_res2net"), 20u);
  EXPECT_EQ(KindOf([] { PresetLearningRate("vgg"); }), ErrorKind::kConfig);
  EXPECT_EQ(KindOf([] { PresetEpochs("voice_encoder"); }), ErrorKind::kConfig);
}

TEST(TrainConfig, EpochLogFormat) {
  EXPECT_EQ(FormatEpochLog({3, 0.25, std::nullopt}), "3 0.25");
  EXPECT_EQ(FormatEpochLog({4, 0.5, 0.125}), "4 0.5 0.125");
}

TEST(Stack, ShapesAndErrors) {
  Rng rng(1);
  const Tensor a = testing::RandomTensor({2, 3}, rng), b = testing::RandomTensor({2, 3}, rng);
  const Tensor *both[] = {&a, &b};
  const Tensor s = Stack(both);
  EXPECT_EQ(s.shape, (Shape{2, 2, 3}));
  EXPECT_TRUE(std::equal(b.data.begin(), b.data.end(), s.data.begin() + 6));
  const Tensor c = testing::RandomTensor({3, 2}, rng);
  const Tensor *mixed[] = {&a, &c};
  EXPECT_EQ(KindOf([&] { Stack(mixed); }), ErrorKind::kShape);
  EXPECT_EQ(KindOf([&] { Stack(std::span<const Tensor *const>{}); }), ErrorKind::kShape);
}

TEST(InferRows, IndependentOfBatching) {
  Model m = TinyEncoder(5);
  m.Initialize(2);
  Rng rng(3);
  std::vector<Tensor> xs;
  for (int i = 0; i < 7; ++i) xs.push_back(testing::RandomTensor({1, 6, 4}, rng));
  const auto whole = InferRows(m, xs, m.Output("embedding"), 32);
  const auto small = InferRows(m, xs, m.Output("embedding"), 3);
  ASSERT_EQ(whole.size(), 7u);
  for (std::size_t i = 0; i < 7; ++i) {
    ASSERT_EQ(whole[i].size(), 5u);
    for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(whole[i][k], small[i][k], 1e-12);
  }
}

TEST(TrainVoiceEncoder, OverfitsOneSample) {
  arch::VoiceEncoderConfig ec;
  ec.scale = 1.0 / 64;
  ec.freq_bins = 6;
  Model m = arch::BuildVoiceEncoder(ec);
  m.Initialize(4);
  Rng rng(5);
  PretrainSet data;
  data.inputs.push_back(testing::RandomTensor({2, 16, 6}, rng));
  std::vector<double> target(arch::EncoderEmbeddingDim(ec));
  for (double &v : target) v = rng.Normal();
  data.targets.push_back(target);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 1;
  cfg.optimizer.learning_rate = 0.001;
  cfg.pretrain_form = nn::PretrainForm::kNormalizedDistance;
  const auto log = TrainVoiceEncoder(m, data, cfg);
  ASSERT_EQ(log.size(), 200u);
  EXPECT_GT(log.front().loss, 0.0);
  EXPECT_LT(log.back().loss, 0.01 * log.front().loss);
}

TEST(TrainVoiceEncoder, DeterministicCheckpoints) {
  testing::TempDir dir("train_det");
  Rng rng(6);
  PretrainSet data;
  for (int i = 0; i < 10; ++i) {
    data.inputs.push_back(testing::RandomTensor({1, 6, 4}, rng));
    std::vector<double> t(3);
    for (double &v : t) v = rng.Normal();
    data.targets.push_back(t);
  }
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 3;
  cfg.seed = 9;
  cfg.checkpoint_every = 2;
  std::vector<std::string> bytes;
  for (int run = 0; run < 2; ++run) {
    Model m = TinyEncoder(3);
    m.Initialize(8);
    cfg.checkpoint_path = dir.path() / ("run" + std::to_string(run) + ".ckpt");
    TrainVoiceEncoder(m, data, cfg);
    bytes.push_back(testing::ReadBytes(cfg.checkpoint_path));
  }
  ASSERT_FALSE(bytes[0].empty());
  EXPECT_EQ(bytes[0], bytes[1]);
}

TEST(TrainVoiceEncoder, ZeroEpochsRejectedWithoutTouchingModel) {
  Model m = TinyEncoder(3);
  m.Initialize(1);
  const auto before = Snapshot(m);
  Rng rng(2);
  PretrainSet data{{testing::RandomTensor({1, 6, 4}, rng)}, {{1.0, 0.0, 0.0}}};
  TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_EQ(KindOf([&] { TrainVoiceEncoder(m, data, cfg); }), ErrorKind::kConfig);
  EXPECT_EQ(Snapshot(m), before);
}

TEST(TrainVoiceEncoder, InputErrors) {
  Rng rng(3);
  PretrainSet data{{testing::RandomTensor({1, 6, 4}, rng)}, {{1.0, 0.0}}};
  TrainConfig cfg;
  Model uninit = TinyEncoder(3);
  EXPECT_EQ(KindOf([&] { TrainVoiceEncoder(uninit, data, cfg); }), ErrorKind::kState);
  Model m = TinyEncoder(3);
  m.Initialize(1);
  EXPECT_EQ(KindOf([&] { TrainVoiceEncoder(m, data, cfg); }), ErrorKind::kShape);
  data.targets.clear();
  EXPECT_EQ(KindOf([&] { TrainVoiceEncoder(m, data, cfg); }), ErrorKind::kShape);
  EXPECT_EQ(KindOf([&] { TrainVoiceEncoder(m, PretrainSet{}, cfg); }), ErrorKind::kTraining);
}

TEST(TrainVoiceEncoder, DivergenceReportsEpoch) {
  Model m = TinyEncoder(3);
  m.Initialize(1);
  Rng rng(4);
  PretrainSet data;
  for (int i = 0; i < 4; ++i) {
    data.inputs.push_back(testing::RandomTensor({1, 6, 4}, rng));
    data.targets.push_back({1.0, 2.0, 3.0});
  }
  // A non-finite input makes the first batch loss non-finite.
  data.inputs[2].data[0] = std::numeric_limits<double>::infinity();
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.pretrain_form = nn::PretrainForm::kLiteral;
  try {
    TrainVoiceEncoder(m, data, cfg);
    ADD_FAILURE() << "expected kTraining";
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::kTraining);
    EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos) << e.what();
  }
}

TEST(TrainVoiceEncoder, ZeroEmbeddingIsATrainingError) {
  Model m = TinyEncoder(3);
  m.Initialize(1);
  // Zero weight and bias force a zero embedding, where the normalized loss is undefined.
  for (auto &[name, t] : m.NamedState()) {
    if (name.rfind("fc.", 0) == 0) std::fill(t->data.begin(), t->data.end(), 0.0);
  }
  Rng rng(4);
  PretrainSet data{{testing::RandomTensor({1, 6, 4}, rng)}, {{1.0, 0.0, 0.0}}};
  TrainConfig cfg;
  EXPECT_EQ(KindOf([&] { TrainVoiceEncoder(m, data, cfg); }), ErrorKind::kTraining);
}

TEST(TrainClassifier, SeparableFeaturesReachZeroEer) {
  arch::ClassifierConfig cc;
  cc.scale = 0.125;
  cc.height = 8;
  cc.width = 10;
  Model m = arch::BuildClassifier(cc);
  m.Initialize(10);
  Rng rng(11);
  LabeledSet data;
  for (int i = 0; i < 32; ++i) {
    const int label = i % 2;
    Tensor x = testing::RandomTensor({1, 8, 10}, rng, -0.5, 0.5);
    for (std::size_t k = 0; k < 40; ++k) x.data[k] += label == 0 ? 1.0 : -1.0;
    data.inputs.push_back(std::move(x));
    data.labels.push_back(label);
  }
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 8;
  cfg.optimizer.learning_rate = 0.0005;
  const auto log = TrainClassifier(m, data, cfg, &data);
  double best = 1.0;
  for (const EpochLog &e : log) {
    ASSERT_TRUE(e.val_eer.has_value());
    best = std::min(best, *e.val_eer);
  }
  EXPECT_EQ(best, 0.0);
  EXPECT_EQ(EvaluateEer(m, data), *log.back().val_eer);
}

TEST(TrainClassifier, OverfitsSingleBatch) {
  arch::ClassifierConfig cc;
  cc.scale = 0.125;
  cc.height = 8;
  cc.width = 10;
  Model m = arch::BuildClassifier(cc);
  m.Initialize(12);
  Rng rng(13);
  LabeledSet data;
  for (int i = 0; i < 8; ++i) {
    data.inputs.push_back(testing::RandomTensor({1, 8, 10}, rng));
    data.labels.push_back(i % 2);
  }
  TrainConfig cfg;
  cfg.epochs = 500;
  cfg.batch_size = 8;
  cfg.optimizer.learning_rate = 0.0005;
  const auto log = TrainClassifier(m, data, cfg);
  double best = log.front().loss;
  for (const EpochLog &e : log) best = std::min(best, e.loss);
  EXPECT_LT(best, 0.01);
}

TEST(TrainClassifier, LabelFlipWithSwappedHeadGivesSameTrajectory) {
  Rng rng(14);
  const LabeledSet data = SeparableSet(12, rng);
  LabeledSet flipped = data;
  for (int &l : flipped.labels) l = 1 - l;
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.batch_size = 5;
  cfg.seed = 3;
  cfg.optimizer.learning_rate = 0.01;

  Model a = TinyClassifier();
  a.Initialize(15);
  Model b = TinyClassifier();
  b.Initialize(15);
  for (auto &[name, t] : b.NamedState()) {
    if (name == "fc.weight") {
      const std::size_t in = t->shape[1];
      std::swap_ranges(t->data.begin(), t->data.begin() + in, t->data.begin() + in);
    } else if (name == "fc.bias") {
      std::swap(t->data[0], t->data[1]);
    }
  }
  const auto la = TrainClassifier(a, data, cfg);
  const auto lb = TrainClassifier(b, flipped, cfg);
  ASSERT_EQ(la.size(), lb.size());
  for (std::size_t i = 0; i < la.size(); ++i) EXPECT_EQ(la[i].loss, lb[i].loss) << "epoch " << i + 1;
}

TEST(TrainClassifier, LabelErrors) {
  Model m = TinyClassifier();
  m.Initialize(1);
  Rng rng(2);
  LabeledSet data = SeparableSet(4, rng);
  TrainConfig cfg;
  data.labels[1] = 2;
  EXPECT_EQ(KindOf([&] { TrainClassifier(m, data, cfg); }), ErrorKind::kParameter);
  data.labels.pop_back();
  EXPECT_EQ(KindOf([&] { TrainClassifier(m, data, cfg); }), ErrorKind::kShape);
}

}  // namespace
}  // namespace fusioncm::train
