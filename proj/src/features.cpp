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

#include "fusioncm/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <ostream>

#include "fusioncm/errors.hpp"

namespace fusioncm {

namespace {

constexpr double kPi = std::numbers::pi;

bool IsPowerOfTwo(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

template <typename T>
void PutLe(std::ostream &out, T value) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.write(reinterpret_cast<const char *>(buf), sizeof(T));
}

template <typename T>
T GetLe(std::istream &in) {
  unsigned char buf[sizeof(T)];
  in.read(reinterpret_cast<char *>(buf), sizeof(T));
  if (!in) Fail(ErrorKind::kFormat, "truncated feature container");
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

constexpr char kFeatureMagic[8] = {'F', 'C', 'M', 'F', 'E', 'A', 'T', '1'};

}  // namespace

void Fft(std::span<std::complex<double>> data) {
  const std::size_t n = data.size();
  if (!IsPowerOfTwo(n)) Fail(ErrorKind::kParameter, "FFT length must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = -2.0 * kPi / static_cast<double>(len);
    const std::size_t half = len / 2;
    for (std::size_t k = 0; k < half; ++k) {
      // Twiddles computed directly rather than by recurrence to keep
      // rounding error at O(eps log n).
      const std::complex<double> w = std::polar(1.0, angle * static_cast<double>(k));
      for (std::size_t start = 0; start < n; start += len) {
        const std::complex<double> u = data[start + k];
        const std::complex<double> v = data[start + k + half] * w;
        data[start + k] = u + v;
        data[start + k + half] = u - v;
      }
    }
  }
}

ComplexSpectrum Stft(const FrameSequence &frames, std::size_t n_fft) {
  if (!IsPowerOfTwo(n_fft)) {
    Fail(ErrorKind::kParameter, "n_fft " + std::to_string(n_fft) + " is not a power of two");
  }
  const auto win = static_cast<std::size_t>(frames.frames.cols());
  if (n_fft < win) {
    Fail(ErrorKind::kParameter, "n_fft must be at least the window length");
  }
  ComplexSpectrum spec;
  spec.n_fft = n_fft;
  spec.sample_rate = frames.sample_rate;
  spec.hop_length = frames.config.hop_length;
  const std::size_t bins = n_fft / 2 + 1;
  spec.values.resize(frames.frames.rows(), static_cast<Eigen::Index>(bins));
  std::vector<std::complex<double>> buf(n_fft);
  for (Eigen::Index r = 0; r < frames.frames.rows(); ++r) {
    std::fill(buf.begin(), buf.end(), std::complex<double>{});
    for (std::size_t n = 0; n < win; ++n) buf[n] = frames.frames(r, static_cast<Eigen::Index>(n));
    Fft(buf);
    for (std::size_t k = 0; k < bins; ++k) spec.values(r, static_cast<Eigen::Index>(k)) = buf[k];
  }
  return spec;
}

std::string FeatureKindName(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::kSpectrogram: return "spectrogram";
    case FeatureKind::kLfcc: return "lfcc";
    case FeatureKind::kCqt: return "cqt";
  }
  return "unknown";
}

FeatureKind ParseFeatureKind(const std::string &name) {
  if (name == "spectrogram") return FeatureKind::kSpectrogram;
  if (name == "lfcc") return FeatureKind::kLfcc;
  if (name == "cqt") return FeatureKind::kCqt;
  Fail(ErrorKind::kParameter, "unknown feature kind '" + name + "'");
}

FeatureMatrix Spectrogram(const ComplexSpectrum &spectrum) {
  FeatureMatrix out;
  out.kind = FeatureKind::kSpectrogram;
  out.channels = 2;
  out.rows = static_cast<std::size_t>(spectrum.values.rows());
  out.cols = static_cast<std::size_t>(spectrum.values.cols());
  out.frame_period = spectrum.sample_rate > 0
                         ? static_cast<double>(spectrum.hop_length) / spectrum.sample_rate
                         : 0.0;
  out.values.resize(2 * out.rows * out.cols);
  out.col_hz.resize(out.cols);
  for (std::size_t k = 0; k < out.cols; ++k) {
    out.col_hz[k] = static_cast<double>(k) * spectrum.sample_rate / static_cast<double>(spectrum.n_fft);
  }
  for (std::size_t r = 0; r < out.rows; ++r) {
    for (std::size_t k = 0; k < out.cols; ++k) {
      const std::complex<double> x = spectrum.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k));
      if (!std::isfinite(x.real()) || !std::isfinite(x.imag())) {
        Fail(ErrorKind::kParameter, "spectrum has non-finite entry");
      }
      const double mag = std::abs(x);
      out.at(0, r, k) = std::pow(mag, 0.3);
      // std::arg already maps to (-pi, pi]; only the x == 0 case needs a rule.
      double phase = mag == 0.0 ? 0.0 : std::arg(x);
      if (phase == -kPi) phase = kPi;
      out.at(1, r, k) = phase;
    }
  }
  return out;
}

FilterBank::FilterBank(std::size_t num_filters, std::size_t n_fft, int sample_rate)
    : n_fft_(n_fft), sample_rate_(sample_rate) {
  if (num_filters < 2) Fail(ErrorKind::kParameter, "filterbank needs at least 2 filters");
  if (n_fft < 2 || sample_rate <= 0) Fail(ErrorKind::kParameter, "invalid n_fft or sample rate");
  const std::size_t bins = n_fft / 2 + 1;
  if (num_filters > bins) {
    Fail(ErrorKind::kParameter, std::to_string(num_filters) + " filters exceed " +
                                    std::to_string(bins) + " representable bins");
  }
  const double nyquist = sample_rate / 2.0;
  centers_hz_.resize(num_filters);
  for (std::size_t i = 0; i < num_filters; ++i) {
    centers_hz_[i] = nyquist * static_cast<double>(i) / static_cast<double>(num_filters - 1);
  }
  weights_.resize(static_cast<Eigen::Index>(num_filters), static_cast<Eigen::Index>(bins));
  for (std::size_t i = 0; i < num_filters; ++i) {
    for (std::size_t k = 0; k < bins; ++k) {
      const double hz = static_cast<double>(k) * sample_rate / static_cast<double>(n_fft);
      weights_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = Response(i, hz);
    }
  }
}

double FilterBank::lower_edge_hz(std::size_t i) const {
  return i == 0 ? centers_hz_[0] : centers_hz_[i - 1];
}

double FilterBank::upper_edge_hz(std::size_t i) const {
  return i + 1 == centers_hz_.size() ? centers_hz_[i] : centers_hz_[i + 1];
}

double FilterBank::Response(std::size_t i, double hz) const {
  const double c = centers_hz_[i];
  if (hz == c) return 1.0;
  if (hz < c) {
    if (i == 0) return 0.0;
    const double lo = centers_hz_[i - 1];
    return hz <= lo ? 0.0 : (hz - lo) / (c - lo);
  }
  if (i + 1 == centers_hz_.size()) return 0.0;
  const double hi = centers_hz_[i + 1];
  return hz >= hi ? 0.0 : (hi - hz) / (hi - c);
}

FilterBank LinearFilterbank(std::size_t num_filters, std::size_t n_fft, int sample_rate) {
  return FilterBank(num_filters, n_fft, sample_rate);
}

std::vector<double> CepstrumFromLogEnergies(std::span<const double> log_energies,
                                            std::size_t num_coefficients) {
  const std::size_t b = log_energies.size();
  std::vector<double> out(num_coefficients + 1, 0.0);
  for (std::size_t j = 0; j <= num_coefficients; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
      acc += log_energies[i] *
             std::cos(static_cast<double>(j) * (static_cast<double>(i) + 0.5) * kPi / static_cast<double>(b));
    }
    out[j] = acc;
  }
  return out;
}

FeatureMatrix Lfcc(const ComplexSpectrum &spectrum, const FilterBank &bank,
                   const LfccConfig &cfg) {
  const std::size_t b = bank.num_filters();
  if (cfg.num_filters != b) {
    Fail(ErrorKind::kShape, "LFCC config expects " + std::to_string(cfg.num_filters) +
                                " filters, bank has " + std::to_string(b));
  }
  if (cfg.num_coefficients == 0 || cfg.num_coefficients > b) {
    Fail(ErrorKind::kParameter, "LFCC requires 0 < M <= B");
  }
  if (static_cast<std::size_t>(spectrum.values.cols()) != bank.num_bins()) {
    Fail(ErrorKind::kShape, "spectrum has " + std::to_string(spectrum.values.cols()) +
                                " bins, filterbank expects " + std::to_string(bank.num_bins()));
  }
  if (!(cfg.floor_epsilon > 0.0)) Fail(ErrorKind::kParameter, "floor_epsilon must be positive");

  const RealMatrix power = spectrum.values.cwiseAbs2();
  const RealMatrix energies = power * bank.weights().transpose();  // frames x B
  const std::size_t m1 = cfg.num_coefficients + 1;
  RealMatrix dct(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(m1));
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < m1; ++j) {
      dct(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          std::cos(static_cast<double>(j) * (static_cast<double>(i) + 0.5) * kPi / static_cast<double>(b));
    }
  }
  const RealMatrix logs = energies.array().max(cfg.floor_epsilon).log().matrix();
  const RealMatrix cep = logs * dct;

  FeatureMatrix out;
  out.kind = FeatureKind::kLfcc;
  out.channels = 1;
  out.rows = static_cast<std::size_t>(cep.rows());
  out.cols = m1;
  out.frame_period = spectrum.sample_rate > 0
                         ? static_cast<double>(spectrum.hop_length) / spectrum.sample_rate
                         : 0.0;
  out.values.assign(cep.data(), cep.data() + cep.size());
  return out;
}

CqtKernel::CqtKernel(const CqtConfig &cfg)
    : bins_per_octave_(cfg.bins_per_octave), sample_rate_(cfg.sample_rate) {
  if (!(cfg.f_min > 0.0)) Fail(ErrorKind::kParameter, "CQT f_min must be positive");
  if (cfg.bins_per_octave == 0) Fail(ErrorKind::kParameter, "bins_per_octave must be positive");
  if (cfg.sample_rate <= 0) Fail(ErrorKind::kParameter, "sample rate must be positive");
  const double fs = cfg.sample_rate;
  const double nyquist = fs / 2.0;
  const double b = static_cast<double>(cfg.bins_per_octave);
  if (cfg.f_min >= nyquist) Fail(ErrorKind::kParameter, "CQT f_min must lie below Nyquist");

  std::size_t k_total = cfg.num_bins;
  if (k_total == 0) {
    while (cfg.f_min * std::exp2(static_cast<double>(k_total) / b) < nyquist) ++k_total;
  } else {
    const double f_top = cfg.f_min * std::exp2(static_cast<double>(k_total - 1) / b);
    if (f_top >= nyquist) {
      Fail(ErrorKind::kParameter, "highest CQT bin " + std::to_string(f_top) +
                                      " Hz is not below Nyquist");
    }
  }
  q_ = 1.0 / (std::exp2(1.0 / b) - 1.0);
  freqs_.resize(k_total);
  lengths_.resize(k_total);
  atoms_.resize(k_total);
  for (std::size_t k = 0; k < k_total; ++k) {
    freqs_[k] = cfg.f_min * std::exp2(static_cast<double>(k) / b);
    lengths_[k] = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(q_ * fs / freqs_[k])));
    const std::size_t n = lengths_[k];
    const std::vector<double> window = HammingWindow(n);
    auto &atom = atoms_[k];
    atom.resize(n);
    double norm = 0.0;
    for (std::size_t m = 0; m < n; ++m) {
      atom[m] = window[m] * std::polar(1.0, 2.0 * kPi * freqs_[k] * static_cast<double>(m) / fs);
      norm += std::norm(atom[m]);
    }
    norm = std::sqrt(norm);
    for (auto &a : atom) a /= norm;
  }
  hop_ = cfg.hop_length != 0
             ? cfg.hop_length
             : std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(lengths_.back() / 4.0)));
}

std::size_t CqtKernel::NumFrames(std::size_t signal_length) const {
  if (signal_length < max_length()) return 0;
  return 1 + (signal_length - max_length()) / hop_;
}

std::size_t CqtKernel::FrameCenter(std::size_t t) const { return max_length() / 2 + t * hop_; }

FeatureMatrix Cqt(const Waveform &wave, const CqtKernel &kernel) {
  wave.Validate();
  if (wave.sample_rate != kernel.sample_rate()) {
    Fail(ErrorKind::kParameter, "waveform sample rate " + std::to_string(wave.sample_rate) +
                                    " does not match CQT kernel " + std::to_string(kernel.sample_rate()));
  }
  const std::size_t frames = kernel.NumFrames(wave.size());
  if (frames == 0) {
    Fail(ErrorKind::kInputTooShort, "signal of " + std::to_string(wave.size()) +
                                        " samples is shorter than the longest CQT atom (" +
                                        std::to_string(kernel.max_length()) + ")");
  }
  FeatureMatrix out;
  out.kind = FeatureKind::kCqt;
  out.channels = 1;
  out.rows = frames;
  out.cols = kernel.num_bins();
  out.values.resize(frames * out.cols);
  out.frame_period = static_cast<double>(kernel.hop_length()) / wave.sample_rate;
  out.col_hz = kernel.frequencies();
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t centre = kernel.FrameCenter(t);
    for (std::size_t k = 0; k < out.cols; ++k) {
      const auto &atom = kernel.atom(k);
      const std::size_t start = centre - atom.size() / 2;
      const double *x = wave.samples.data() + start;
      double re = 0.0, im = 0.0;
      for (std::size_t m = 0; m < atom.size(); ++m) {
        // x * conj(a)
        re += x[m] * atom[m].real();
        im -= x[m] * atom[m].imag();
      }
      out.at(0, t, k) = std::hypot(re, im);
    }
  }
  return out;
}

void WriteFeatures(std::ostream &out, const FeatureMatrix &feats) {
  out.write(kFeatureMagic, sizeof(kFeatureMagic));
  PutLe<std::uint8_t>(out, 1);
  PutLe<std::uint8_t>(out, static_cast<std::uint8_t>(feats.kind));
  PutLe<std::uint16_t>(out, 0);
  PutLe<std::uint32_t>(out, static_cast<std::uint32_t>(feats.channels));
  PutLe<std::uint32_t>(out, static_cast<std::uint32_t>(feats.rows));
  PutLe<std::uint32_t>(out, static_cast<std::uint32_t>(feats.cols));
  PutLe<double>(out, feats.frame_period);
  for (double v : feats.values) PutLe<double>(out, v);
  if (!out) Fail(ErrorKind::kIo, "failed writing feature container");
}

FeatureMatrix ReadFeatures(std::istream &in) {
  char magic[sizeof(kFeatureMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kFeatureMagic, sizeof(magic)) != 0) {
    Fail(ErrorKind::kFormat, "bad feature container magic");
  }
  if (GetLe<std::uint8_t>(in) != 1) Fail(ErrorKind::kFormat, "unsupported feature dtype");
  const auto kind = GetLe<std::uint8_t>(in);
  if (kind < 1 || kind > 3) Fail(ErrorKind::kFormat, "unknown feature kind tag");
  GetLe<std::uint16_t>(in);
  FeatureMatrix feats;
  feats.kind = static_cast<FeatureKind>(kind);
  feats.channels = GetLe<std::uint32_t>(in);
  feats.rows = GetLe<std::uint32_t>(in);
  feats.cols = GetLe<std::uint32_t>(in);
  feats.frame_period = GetLe<double>(in);
  feats.values.resize(feats.channels * feats.rows * feats.cols);
  for (double &v : feats.values) v = GetLe<double>(in);
  return feats;
}

void SaveFeatures(const std::filesystem::path &path, const FeatureMatrix &feats) {
  std::ofstream out(path, std::ios::binary);
  if (!out) Fail(ErrorKind::kIo, "cannot write " + path.string());
  WriteFeatures(out, feats);
}

FeatureMatrix LoadFeatures(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kIo, "cannot open " + path.string());
  return ReadFeatures(in);
}

void WriteFeaturesCsv(std::ostream &out, const FeatureMatrix &feats) {
  out << "channel,frame";
  for (std::size_t k = 0; k < feats.cols; ++k) out << ",c" << k;
  out << '\n';
  char buf[32];
  for (std::size_t c = 0; c < feats.channels; ++c) {
    for (std::size_t r = 0; r < feats.rows; ++r) {
      out << c << ',' << r;
      for (std::size_t k = 0; k < feats.cols; ++k) {
        std::snprintf(buf, sizeof(buf), "%.17g", feats.at(c, r, k));
        out << ',' << buf;
      }
      out << '\n';
    }
  }
}

}  // namespace fusioncm
