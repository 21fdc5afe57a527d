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

#include <complex>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace fusioncm {

using RealMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ComplexMatrix = Eigen::Matrix<std::complex<double>, Eigen::Dynamic,
                                    Eigen::Dynamic, Eigen::RowMajor>;

// Mono PCM signal. Samples are kept in double precision in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 0;

  std::size_t size() const { return samples.size(); }
  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
  // Throws kParameter if empty, non-finite or sample_rate <= 0.
  void Validate() const;
};

enum class WindowKind { kHamming };

struct FramingConfig {
  std::size_t window_length = 400;
  std::size_t hop_length = 160;
  WindowKind window_kind = WindowKind::kHamming;
};

struct FrameSequence {
  RealMatrix frames;  // n_frames x window_length, already windowed
  FramingConfig config;
  int sample_rate = 0;

  std::size_t num_frames() const { return static_cast<std::size_t>(frames.rows()); }
};

// Symmetric Hamming window, w[n] = 0.54 - 0.46 cos(2 pi n / (N - 1)).
std::vector<double> HammingWindow(std::size_t length);

// 1 + floor((len - window) / hop), or 0 when the signal is shorter than a window.
std::size_t NumFrames(std::size_t signal_length, std::size_t window_length,
                      std::size_t hop_length);

FrameSequence FrameAndWindow(const Waveform &wave, const FramingConfig &cfg);

// RIFF/WAVE, 16-bit PCM, mono, little-endian.
Waveform LoadWav(const std::filesystem::path &path);
Waveform DecodeWav(std::span<const std::uint8_t> bytes);
void WriteWav(const std::filesystem::path &path, const Waveform &wave);
std::vector<std::uint8_t> EncodeWav(const Waveform &wave);

enum class SignalKind { kSine, kSineSum, kNoise, kChirp };

struct SynthSpec {
  SignalKind kind = SignalKind::kSine;
  // kSine uses frequencies[0]; kSineSum uses all; kChirp sweeps
  // frequencies[0] -> frequencies[1] linearly.
  std::vector<double> frequencies{440.0};
  // One amplitude per frequency for kSineSum, otherwise amplitudes[0].
  std::vector<double> amplitudes{0.5};
  double duration = 1.0;
  int sample_rate = 16000;
  std::uint64_t seed = 0;
};

SignalKind ParseSignalKind(const std::string &name);

// Deterministic given spec.seed; peak amplitude never exceeds 1.
Waveform SynthSignal(const SynthSpec &spec);

}  // namespace fusioncm
