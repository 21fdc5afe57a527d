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
#include <set>
#include <string>
#include <vector>

#include "fusioncm/architectures.hpp"
#include "fusioncm/audio.hpp"
#include "fusioncm/config.hpp"
#include "fusioncm/dataset.hpp"
#include "fusioncm/features.hpp"
#include "fusioncm/fusion.hpp"
#include "fusioncm/metrics.hpp"
#include "fusioncm/protocol.hpp"
#include "fusioncm/training.hpp"

namespace fusioncm {

enum class Scenario { kLa, kPa };

Scenario ParseScenario(const std::string &name);
const char *ScenarioName(Scenario s);

struct StageTraining {
  double learning_rate = 0.001;
  std::size_t epochs = 1;
};

// Every knob the harness reads from a config file. Defaults are the
// full-scale values; desk runs override them.
struct PipelineConfig {
  Scenario scenario = Scenario::kLa;
  std::uint64_t seed = 0;
  std::filesystem::path data_dir = "data";
  std::filesystem::path work_dir = "work";
  std::size_t threads = 1;

  FramingConfig framing;
  std::size_t n_fft = 512;
  LfccConfig lfcc;
  CqtConfig cqt;

  double encoder_scale = 1.0;
  double densenet_scale = 1.0;
  double classifier_scale = 1.0;
  double res2net_scale = 1.0;
  std::vector<std::size_t> res2net_widths = {16, 32, 64, 128};
  std::size_t res2net_s = 4;
  std::size_t se_reduction = 16;
  double classifier_dropout = 0.5;

  FusionWeights fusion;
  std::size_t map_height = 64;
  std::size_t map_width = 66;
  ScoreSpace score_space = ScoreSpace::kProbability;

  std::size_t batch_size = 32;
  nn::AdamConfig adam;
  nn::PretrainForm pretrain_form = nn::PretrainForm::kNormalizedDistance;
  StageTraining encoder{0.001, 10};
  StageTraining densenet{0.0005, 200};
  StageTraining classifier{0.0005, 200};
  StageTraining pa_encoder{0.001, 20};
  StageTraining res2net{0.0003, 20};
  bool validate_each_epoch = false;

  double beta = 1.0;
  SynthDatasetConfig synth;

  static PipelineConfig FromConfig(const Config &config);
  static const std::set<std::string> &Keys();

  // Checks cross-field constraints, including that the LA fusion map can
  // hold both embeddings.
  void Validate() const;

  // Canonical text of everything that changes a given feature's values.
  std::string FeatureFingerprint(FeatureKind kind) const;

  std::filesystem::path ModelDir() const { return work_dir / ScenarioName(scenario); }
  std::filesystem::path ScorePath(Subset subset) const;
};

// Component factories. Each asserts that it belongs to cfg.scenario.
arch::VoiceEncoderConfig LaEncoderConfig(const PipelineConfig &cfg);
arch::VoiceEncoderConfig PaEncoderConfig(const PipelineConfig &cfg);
arch::SeDenseNetConfig DenseNetConfig(const PipelineConfig &cfg);
arch::ClassifierConfig ClassifierConfigFor(const PipelineConfig &cfg);
arch::SeRes2NetConfig Res2NetConfig(const PipelineConfig &cfg);

// FNV-1a, 64-bit.
std::uint64_t Fnv1a(const void *data, std::size_t size, std::uint64_t h = 0xcbf29ce484222325ULL);

// Computes one feature for a decoded waveform.
FeatureMatrix ComputeFeature(const PipelineConfig &cfg, FeatureKind kind, const Waveform &wave);

// Reads every utterance of `trials` and returns its features, consulting the
// on-disk cache keyed by (audio bytes, feature fingerprint).
std::vector<FeatureMatrix> ExtractFeatures(const PipelineConfig &cfg, const TrialList &trials,
                                           FeatureKind kind);

// Per (channel, column) standardisation pooled over rows and utterances.
struct Normalizer {
  std::size_t channels = 0;
  std::size_t cols = 0;
  std::vector<double> mean;
  std::vector<double> inv_std;

  static Normalizer Fit(const std::vector<FeatureMatrix> &feats);
  nn::Tensor Apply(const FeatureMatrix &f) const;  // C x rows x cols
  void Save(const std::filesystem::path &path) const;
  static Normalizer Load(const std::filesystem::path &path);
};

using LogFn = std::function<void(const std::string &)>;

// Trains every network of cfg.scenario on the train subset and writes
// checkpoints and normalisers under cfg.ModelDir().
void TrainModels(const PipelineConfig &cfg, const LogFn &log = {});

// Scores a subset with saved checkpoints, one record per trial in protocol
// order, and writes cfg.ScorePath(subset).
std::vector<ScoreRecord> ScoreSubset(const PipelineConfig &cfg, Subset subset, const LogFn &log = {});

// Train (optional), score and evaluate one subset.
MetricReport RunPipeline(const PipelineConfig &cfg, Subset subset, bool train, const LogFn &log = {});

// Runs fn(i) for i in [0, n) on `threads` workers. Rethrows the first error.
void ParallelFor(std::size_t n, std::size_t threads, const std::function<void(std::size_t)> &fn);

}  // namespace fusioncm
