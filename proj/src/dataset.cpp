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

#include "fusioncm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "fusioncm/errors.hpp"
#include "fusioncm/rng.hpp"

namespace fusioncm {

namespace {

std::uint64_t SplitMix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t UtteranceSeed(std::uint64_t seed, Subset subset, std::size_t index) {
  return SplitMix(SplitMix(seed) ^ (static_cast<std::uint64_t>(subset) << 40) ^ index);
}

}  // namespace

void SynthDatasetConfig::Validate() const {
  if (train_per_class == 0 || dev_per_class == 0 || eval_per_class == 0) {
    Fail(ErrorKind::kParameter, "every subset needs at least one utterance per class");
  }
  if (speakers == 0 || speakers > 99) Fail(ErrorKind::kParameter, "speakers must be in [1, 99]");
  if (!(separation >= 0.0) || separation > 10.0) {
    Fail(ErrorKind::kParameter, "separation must lie in [0, 10]");
  }
  if (!(duration > 0.0)) Fail(ErrorKind::kParameter, "duration must be positive");
  if (sample_rate <= 0 || !(artifact_hz > 0.0) || artifact_hz + 400.0 >= sample_rate / 2.0) {
    Fail(ErrorKind::kParameter, "artifact tone must sit below Nyquist with 400 Hz margin");
  }
}

std::size_t PerClass(const SynthDatasetConfig &cfg, Subset subset) {
  switch (subset) {
    case Subset::kTrain: return cfg.train_per_class;
    case Subset::kDev: return cfg.dev_per_class;
    case Subset::kEval: return cfg.eval_per_class;
  }
  return 0;
}

Waveform SynthUtterance(const SynthDatasetConfig &cfg, std::size_t speaker, bool spoof,
                        std::uint64_t utterance_seed) {
  cfg.Validate();
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  const double fs = cfg.sample_rate;
  const auto n = static_cast<std::size_t>(std::llround(cfg.duration * fs));
  Rng speaker_rng(SplitMix(cfg.seed ^ 0x5eedULL) + speaker);
  const double base_f0 = 100.0 + 150.0 * speaker_rng.Uniform();
  const double tilt = 0.6 + 0.6 * speaker_rng.Uniform();

  Rng rng(utterance_seed);
  const double f0 = base_f0 * (1.0 + 0.04 * rng.Normal());
  const double vibrato_hz = 3.0 + 3.0 * rng.Uniform();
  const double vibrato_depth = 0.01 * rng.Uniform();

  std::vector<double> amp, phase;
  for (std::size_t h = 1; h * f0 < 4000.0; ++h) {
    amp.push_back((0.5 + 0.5 * rng.Uniform()) / std::pow(static_cast<double>(h), tilt));
    phase.push_back(kTwoPi * rng.Uniform());
  }
  double amp_sum = 0.0;
  for (double a : amp) amp_sum += a;
  const double gain = 0.6 / amp_sum;

  // Drawn for both classes so the random stream is class independent.
  const double art_f = cfg.artifact_hz + 400.0 * (rng.Uniform() - 0.5);
  const double art_phase = kTwoPi * rng.Uniform();
  const double art_amp = spoof ? kArtifactAmplitude * cfg.separation : 0.0;

  Waveform w;
  w.sample_rate = cfg.sample_rate;
  w.samples.resize(n);
  double f0_phase = 0.0;
  const double ramp = std::min(0.02 * fs, n / 4.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = i / fs;
    const double inst = f0 * (1.0 + vibrato_depth * std::sin(kTwoPi * vibrato_hz * t));
    f0_phase += kTwoPi * inst / fs;
    double x = 0.0;
    for (std::size_t h = 0; h < amp.size(); ++h) {
      x += amp[h] * std::sin(static_cast<double>(h + 1) * f0_phase + phase[h]);
    }
    double env = 1.0;
    if (i < ramp) env = i / ramp;
    if (n - 1 - i < ramp) env = (n - 1 - i) / ramp;
    x = gain * env * x + 0.01 * (rng.Uniform() * 2.0 - 1.0);
    x += art_amp * std::sin(kTwoPi * art_f * t + art_phase);
    w.samples[i] = std::clamp(x, -0.99, 0.99);
  }
  return w;
}

TrialList SyntheticTrials(const SynthDatasetConfig &cfg, Subset subset) {
  cfg.Validate();
  TrialList list;
  list.subset = subset;
  const std::size_t per = PerClass(cfg, subset);
  const char tag = subset == Subset::kTrain ? 'T' : subset == Subset::kDev ? 'D' : 'E';
  for (std::size_t i = 0; i < 2 * per; ++i) {
    const bool spoof = i % 2 == 1;
    Trial t;
    char buf[32];
    std::snprintf(buf, sizeof buf, "SPK%02zu", (i / 2) % cfg.speakers);
    t.speaker_id = buf;
    std::snprintf(buf, sizeof buf, "SYN_%c_%06zu", tag, i);
    t.utterance_id = buf;
    if (spoof) {
      std::snprintf(buf, sizeof buf, "A%02zu", 1 + (i / 2) % 6);
      t.attack_id = buf;
    }
    t.key = spoof ? TrialKey::kSpoof : TrialKey::kBonafide;
    list.trials.push_back(std::move(t));
  }
  return list;
}

std::size_t SpeakerIndex(const std::string &speaker_id) {
  if (speaker_id.size() != 5 || speaker_id.rfind("SPK", 0) != 0) {
    Fail(ErrorKind::kParse, "'" + speaker_id + "' is not a synthetic speaker id");
  }
  return static_cast<std::size_t>(std::stoul(speaker_id.substr(3)));
}

std::filesystem::path ProtocolPath(const std::filesystem::path &data_dir, Subset subset) {
  return data_dir / (std::string("protocol.") + SubsetName(subset) + ".txt");
}

std::filesystem::path WavPath(const std::filesystem::path &data_dir, Subset subset,
                              const std::string &utterance_id) {
  return data_dir / SubsetName(subset) / (utterance_id + ".wav");
}

void WriteSyntheticDataset(const SynthDatasetConfig &cfg, const std::filesystem::path &dir) {
  cfg.Validate();
  for (Subset s : {Subset::kTrain, Subset::kDev, Subset::kEval}) {
    const TrialList list = SyntheticTrials(cfg, s);
    std::filesystem::create_directories(dir / SubsetName(s));
    for (std::size_t i = 0; i < list.size(); ++i) {
      const Trial &t = list.trials[i];
      const Waveform w = SynthUtterance(cfg, SpeakerIndex(t.speaker_id),
                                        *t.key == TrialKey::kSpoof, UtteranceSeed(cfg.seed, s, i));
      WriteWav(WavPath(dir, s, t.utterance_id), w);
    }
    std::ofstream out(ProtocolPath(dir, s), std::ios::binary);
    if (!out) Fail(ErrorKind::kIo, "cannot write protocol in " + dir.string());
    WriteProtocol(out, list);
  }
}

}  // namespace fusioncm
