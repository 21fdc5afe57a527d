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
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fusioncm/audio.hpp"

namespace fusioncm {

// In-place iterative radix-2 FFT. data.size() must be a power of two.
void Fft(std::span<std::complex<double>> data);

struct ComplexSpectrum {
  ComplexMatrix values;  // n_frames x (n_fft / 2 + 1)
  std::size_t n_fft = 0;
  int sample_rate = 0;
  std::size_t hop_length = 0;

  std::size_t num_bins() const { return n_fft / 2 + 1; }
};

ComplexSpectrum Stft(const FrameSequence &frames, std::size_t n_fft);

enum class FeatureKind : std::uint8_t { kSpectrogram = 1, kLfcc = 2, kCqt = 3 };

std::string FeatureKindName(FeatureKind kind);
FeatureKind ParseFeatureKind(const std::string &name);

// channels x rows (time) x cols (frequency / coefficient), row-major.
struct FeatureMatrix {
  FeatureKind kind = FeatureKind::kLfcc;
  std::size_t channels = 1;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  double frame_period = 0.0;   // seconds between rows
  std::vector<double> col_hz;  // centre frequency per column, empty for cepstra

  double &at(std::size_t c, std::size_t r, std::size_t k) {
    return values[(c * rows + r) * cols + k];
  }
  double at(std::size_t c, std::size_t r, std::size_t k) const {
    return values[(c * rows + r) * cols + k];
  }
};

// Channel 0: |X|^0.3. Channel 1: arg X in (-pi, pi], with arg 0 := 0.
FeatureMatrix Spectrogram(const ComplexSpectrum &spectrum);

// Triangular filters with centres spaced evenly from 0 Hz to Nyquist. Filter
// i rises from centre i-1 to its own centre and falls to centre i+1, so the
// responses form a partition of unity between the first and last centres.
class FilterBank {
 public:
  FilterBank(std::size_t num_filters, std::size_t n_fft, int sample_rate);

  std::size_t num_filters() const { return centers_hz_.size(); }
  std::size_t num_bins() const { return static_cast<std::size_t>(weights_.cols()); }
  std::size_t n_fft() const { return n_fft_; }
  int sample_rate() const { return sample_rate_; }

  // num_filters x num_bins, sampled at bin frequencies k * fs / n_fft.
  const RealMatrix &weights() const { return weights_; }
  const std::vector<double> &centers_hz() const { return centers_hz_; }
  double lower_edge_hz(std::size_t i) const;
  double upper_edge_hz(std::size_t i) const;

  // Continuous triangular response of filter i at an arbitrary frequency.
  double Response(std::size_t i, double hz) const;

 private:
  std::size_t n_fft_;
  int sample_rate_;
  std::vector<double> centers_hz_;
  RealMatrix weights_;
};

FilterBank LinearFilterbank(std::size_t num_filters, std::size_t n_fft, int sample_rate);

struct LfccConfig {
  std::size_t num_filters = 70;       // B
  std::size_t num_coefficients = 19;  // M, output has M + 1 columns (j = 0..M)
  double floor_epsilon = 1e-10;
};

// LFCC_j = sum_{i=1..B} X_i cos(j (i - 1/2) pi / B), X_i = log filter energy.
FeatureMatrix Lfcc(const ComplexSpectrum &spectrum, const FilterBank &bank,
                   const LfccConfig &cfg);

// Cepstral step alone, one row of log energies in, M + 1 coefficients out.
std::vector<double> CepstrumFromLogEnergies(std::span<const double> log_energies,
                                            std::size_t num_coefficients);

struct CqtConfig {
  double f_min = 20.0;
  std::size_t bins_per_octave = 12;
  std::size_t num_bins = 0;  // 0 = as many as fit below Nyquist
  int sample_rate = 16000;
  std::size_t hop_length = 0;  // 0 = round(min N_k / 4)
};

// Precomputed atoms a_k: Hamming-windowed complex exponentials at f_k,
// normalised to unit L2 norm. Immutable once built.
class CqtKernel {
 public:
  explicit CqtKernel(const CqtConfig &cfg);

  std::size_t num_bins() const { return freqs_.size(); }
  std::size_t bins_per_octave() const { return bins_per_octave_; }
  int sample_rate() const { return sample_rate_; }
  std::size_t hop_length() const { return hop_; }
  double q_factor() const { return q_; }
  const std::vector<double> &frequencies() const { return freqs_; }
  const std::vector<std::size_t> &lengths() const { return lengths_; }
  std::size_t max_length() const { return lengths_.front(); }
  const std::vector<std::complex<double>> &atom(std::size_t k) const { return atoms_[k]; }

  // Number of analysis positions for a signal of the given length.
  std::size_t NumFrames(std::size_t signal_length) const;
  // Sample index of frame t's centre.
  std::size_t FrameCenter(std::size_t t) const;

 private:
  std::size_t bins_per_octave_;
  int sample_rate_;
  double q_;
  std::size_t hop_;
  std::vector<double> freqs_;
  std::vector<std::size_t> lengths_;
  std::vector<std::vector<std::complex<double>>> atoms_;
};

// |X^CQ(k, n)| as a time x K matrix.
FeatureMatrix Cqt(const Waveform &wave, const CqtKernel &kernel);

// Binary container: "FCMFEAT1", u8 dtype (1 = f64), u8 kind, u16 reserved,
// u32 channels, u32 rows, u32 cols, f64 frame_period, then row-major f64
// payload, all little-endian.
void WriteFeatures(std::ostream &out, const FeatureMatrix &feats);
FeatureMatrix ReadFeatures(std::istream &in);
void SaveFeatures(const std::filesystem::path &path, const FeatureMatrix &feats);
FeatureMatrix LoadFeatures(const std::filesystem::path &path);
void WriteFeaturesCsv(std::ostream &out, const FeatureMatrix &feats);

}  // namespace fusioncm
