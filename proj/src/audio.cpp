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

#include "fusioncm/audio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include "fusioncm/errors.hpp"
#include "fusioncm/rng.hpp"

namespace fusioncm {

namespace {

std::uint32_t ReadU32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) |
         (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) |
         (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

std::uint16_t ReadU16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

void PutU32(std::vector<std::uint8_t> &out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void PutU16(std::vector<std::uint8_t> &out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

bool TagIs(std::span<const std::uint8_t> b, std::size_t at, const char *tag) {
  return std::equal(tag, tag + 4, b.begin() + static_cast<std::ptrdiff_t>(at));
}

}  // namespace

void Waveform::Validate() const {
  if (sample_rate <= 0) Fail(ErrorKind::kParameter, "sample_rate must be positive");
  if (samples.empty()) Fail(ErrorKind::kParameter, "waveform is empty");
  for (double s : samples) {
    if (!std::isfinite(s)) Fail(ErrorKind::kParameter, "waveform has non-finite sample");
  }
}

std::vector<double> HammingWindow(std::size_t length) {
  std::vector<double> w(length, 1.0);
  if (length < 2) return w;
  const double denom = static_cast<double>(length - 1);
  for (std::size_t n = 0; n < length; ++n) {
    w[n] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / denom);
  }
  return w;
}

std::size_t NumFrames(std::size_t signal_length, std::size_t window_length,
                      std::size_t hop_length) {
  if (signal_length < window_length) return 0;
  return 1 + (signal_length - window_length) / hop_length;
}

FrameSequence FrameAndWindow(const Waveform &wave, const FramingConfig &cfg) {
  wave.Validate();
  if (cfg.window_length == 0 || cfg.hop_length == 0 || cfg.hop_length > cfg.window_length) {
    Fail(ErrorKind::kParameter, "framing requires 0 < hop_length <= window_length");
  }
  if (wave.size() < cfg.window_length) {
    Fail(ErrorKind::kInputTooShort,
         "signal of " + std::to_string(wave.size()) + " samples is shorter than window of " +
             std::to_string(cfg.window_length));
  }
  const std::size_t n_frames = NumFrames(wave.size(), cfg.window_length, cfg.hop_length);
  const std::vector<double> window = HammingWindow(cfg.window_length);

  FrameSequence seq;
  seq.config = cfg;
  seq.sample_rate = wave.sample_rate;
  seq.frames.resize(static_cast<Eigen::Index>(n_frames),
                    static_cast<Eigen::Index>(cfg.window_length));
  for (std::size_t i = 0; i < n_frames; ++i) {
    const double *src = wave.samples.data() + i * cfg.hop_length;
    for (std::size_t n = 0; n < cfg.window_length; ++n) {
      seq.frames(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(n)) = src[n] * window[n];
    }
  }
  return seq;
}

Waveform DecodeWav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || !TagIs(bytes, 0, "RIFF") || !TagIs(bytes, 8, "WAVE")) {
    Fail(ErrorKind::kFormat, "not a RIFF/WAVE container");
  }
  std::size_t pos = 12;
  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0, format = 0;
  std::uint32_t rate = 0;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t chunk_size = ReadU32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (TagIs(bytes, pos, "fmt ")) {
      if (chunk_size < 16 || body + 16 > bytes.size()) Fail(ErrorKind::kFormat, "truncated fmt chunk");
      format = ReadU16(bytes, body);
      channels = ReadU16(bytes, body + 2);
      rate = ReadU32(bytes, body + 4);
      bits = ReadU16(bytes, body + 14);
      have_fmt = true;
    } else if (TagIs(bytes, pos, "data")) {
      if (!have_fmt) Fail(ErrorKind::kFormat, "data chunk before fmt chunk");
      // 0xFFFE is WAVE_FORMAT_EXTENSIBLE; the subformat is assumed PCM.
      if (format != 1 && format != 0xFFFE) {
        Fail(ErrorKind::kUnsupportedEncoding, "only PCM wav is supported");
      }
      if (channels != 1) {
        Fail(ErrorKind::kUnsupportedEncoding,
             "only mono wav is supported, got " + std::to_string(channels) + " channels");
      }
      if (bits != 16) {
        Fail(ErrorKind::kUnsupportedEncoding,
             "only 16-bit wav is supported, got " + std::to_string(bits) + " bits");
      }
      if (rate == 0) Fail(ErrorKind::kFormat, "sample rate is zero");
      if (body + chunk_size > bytes.size()) Fail(ErrorKind::kFormat, "truncated data chunk");
      Waveform wave;
      wave.sample_rate = static_cast<int>(rate);
      const std::size_t n = chunk_size / 2;
      wave.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto v = static_cast<std::int16_t>(ReadU16(bytes, body + 2 * i));
        wave.samples[i] = static_cast<double>(v) / 32768.0;
      }
      return wave;
    }
    pos = body + chunk_size + (chunk_size & 1u);
  }
  Fail(ErrorKind::kFormat, have_fmt ? "missing data chunk" : "missing fmt chunk");
}

Waveform LoadWav(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return DecodeWav(bytes);
  } catch (const Error &e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> EncodeWav(const Waveform &wave) {
  if (wave.sample_rate <= 0) Fail(ErrorKind::kParameter, "sample_rate must be positive");
  const auto data_bytes = static_cast<std::uint32_t>(wave.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  PutU32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  PutU32(out, 16);
  PutU16(out, 1);  // PCM
  PutU16(out, 1);  // mono
  PutU32(out, static_cast<std::uint32_t>(wave.sample_rate));
  PutU32(out, static_cast<std::uint32_t>(wave.sample_rate) * 2);
  PutU16(out, 2);
  PutU16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  PutU32(out, data_bytes);
  for (double s : wave.samples) {
    const double q = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    PutU16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  return out;
}

void WriteWav(const std::filesystem::path &path, const Waveform &wave) {
  const std::vector<std::uint8_t> bytes = EncodeWav(wave);
  std::ofstream out(path, std::ios::binary);
  if (!out) Fail(ErrorKind::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char *>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

SignalKind ParseSignalKind(const std::string &name) {
  if (name == "sine") return SignalKind::kSine;
  if (name == "sine_sum") return SignalKind::kSineSum;
  if (name == "noise") return SignalKind::kNoise;
  if (name == "chirp") return SignalKind::kChirp;
  Fail(ErrorKind::kParameter, "unknown signal kind '" + name + "'");
}

Waveform SynthSignal(const SynthSpec &spec) {
  if (spec.sample_rate <= 0) Fail(ErrorKind::kParameter, "sample_rate must be positive");
  if (!(spec.duration > 0.0)) Fail(ErrorKind::kParameter, "duration must be positive");
  const double nyquist = spec.sample_rate / 2.0;
  for (double f : spec.frequencies) {
    if (!(f >= 0.0) || f >= nyquist) {
      Fail(ErrorKind::kParameter, "frequency " + std::to_string(f) + " Hz is not below Nyquist " +
                                      std::to_string(nyquist) + " Hz");
    }
  }
  for (double a : spec.amplitudes) {
    if (!(std::abs(a) <= 1.0)) Fail(ErrorKind::kParameter, "amplitude must lie in [-1, 1]");
  }
  auto need = [&](std::size_t nf, std::size_t na) {
    if (spec.frequencies.size() < nf || spec.amplitudes.size() < na) {
      Fail(ErrorKind::kParameter, "not enough frequencies/amplitudes for signal kind");
    }
  };

  const auto n = static_cast<std::size_t>(std::llround(spec.duration * spec.sample_rate));
  if (n == 0) Fail(ErrorKind::kParameter, "duration shorter than one sample");
  const double fs = spec.sample_rate;
  constexpr double kTwoPi = 2.0 * std::numbers::pi;

  Waveform wave;
  wave.sample_rate = spec.sample_rate;
  wave.samples.assign(n, 0.0);
  switch (spec.kind) {
    case SignalKind::kSine: {
      need(1, 1);
      for (std::size_t i = 0; i < n; ++i) {
        wave.samples[i] = spec.amplitudes[0] * std::cos(kTwoPi * spec.frequencies[0] * i / fs);
      }
      break;
    }
    case SignalKind::kSineSum: {
      need(1, spec.frequencies.size());
      double total = 0.0;
      for (std::size_t k = 0; k < spec.frequencies.size(); ++k) total += std::abs(spec.amplitudes[k]);
      const double gain = total > 1.0 ? 1.0 / total : 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        double v = 0.0;
        for (std::size_t k = 0; k < spec.frequencies.size(); ++k) {
          v += spec.amplitudes[k] * std::cos(kTwoPi * spec.frequencies[k] * i / fs);
        }
        wave.samples[i] = gain * v;
      }
      break;
    }
    case SignalKind::kNoise: {
      need(0, 1);
      Rng rng(spec.seed);
      for (double &s : wave.samples) s = spec.amplitudes[0] * rng.Uniform(-1.0, 1.0);
      break;
    }
    case SignalKind::kChirp: {
      need(2, 1);
      const double f0 = spec.frequencies[0];
      const double f1 = spec.frequencies[1];
      const double span = static_cast<double>(n) / fs;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = i / fs;
        const double phase = kTwoPi * (f0 * t + 0.5 * (f1 - f0) * t * t / span);
        wave.samples[i] = spec.amplitudes[0] * std::cos(phase);
      }
      break;
    }
  }
  return wave;
}

}  // namespace fusioncm
