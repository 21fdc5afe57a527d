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
#include <string>

#include "fusioncm/audio.hpp"
#include "fusioncm/protocol.hpp"

namespace fusioncm {

// Desk-scale stand-in for a spoofing corpus. Bona fide utterances are
// harmonic tones around a per-speaker pitch; spoofed ones are drawn from the
// same generator plus a high-band tone whose amplitude is `separation`
// times kArtifactAmplitude. With separation 0 both classes share one
// distribution.
struct SynthDatasetConfig {
  std::size_t train_per_class = 200;
  std::size_t dev_per_class = 50;
  std::size_t eval_per_class = 100;
  std::size_t speakers = 8;
  double separation = 1.0;
  double duration = 1.0;
  double artifact_hz = 6000.0;
  int sample_rate = 16000;
  std::uint64_t seed = 0;

  void Validate() const;
};

inline constexpr double kArtifactAmplitude = 0.05;

std::size_t PerClass(const SynthDatasetConfig &cfg, Subset subset);

// Deterministic in (cfg, speaker, spoof, utterance_seed).
Waveform SynthUtterance(const SynthDatasetConfig &cfg, std::size_t speaker, bool spoof,
                        std::uint64_t utterance_seed);

// Trial list for a subset; utterances alternate bona fide / spoof.
TrialList SyntheticTrials(const SynthDatasetConfig &cfg, Subset subset);

// Speaker index encoded in a synthetic speaker id ("SPK03" -> 3).
std::size_t SpeakerIndex(const std::string &speaker_id);

std::filesystem::path ProtocolPath(const std::filesystem::path &data_dir, Subset subset);
std::filesystem::path WavPath(const std::filesystem::path &data_dir, Subset subset,
                              const std::string &utterance_id);

// Writes <dir>/protocol.<subset>.txt and <dir>/<subset>/<utt>.wav for all
// three subsets.
void WriteSyntheticDataset(const SynthDatasetConfig &cfg, const std::filesystem::path &dir);

}  // namespace fusioncm
