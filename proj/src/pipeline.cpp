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

#include "fusioncm/pipeline.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "fusioncm/errors.hpp"
#include "fusioncm/rng.hpp"

namespace fusioncm {

namespace fs = std::filesystem;

Scenario ParseScenario(const std::string &name) {
  if (name == "la" || name == "LA") return Scenario::kLa;
  if (name == "pa" || name == "PA") return Scenario::kPa;
  Fail(ErrorKind::kConfig, "unknown scenario '" + name + "' (la|pa)");
}

const char *ScenarioName(Scenario s) { return s == Scenario::kLa ? "la" : "pa"; }

namespace {

std::vector<std::size_t> ParseSizeList(const std::string &key, const std::string &text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (v <= 0) throw std::invalid_argument("non-positive");
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception &) {
      Fail(ErrorKind::kConfig, key + ": '" + text + "' is not a list of positive integers");
    }
  }
  if (out.empty()) Fail(ErrorKind::kConfig, key + " must not be empty");
  return out;
}

StageTraining ReadStage(const Config &c, const std::string &prefix, StageTraining d) {
  d.learning_rate = c.GetDouble(prefix + ".lr", d.learning_rate);
  d.epochs = c.GetSize(prefix + ".epochs", d.epochs);
  return d;
}

void RequireScenario(const PipelineConfig &cfg, Scenario s, const char *component) {
  if (cfg.scenario != s) {
    Fail(ErrorKind::kState, std::string(component) + " belongs to the " + ScenarioName(s) +
                                " pipeline but the config selects " + ScenarioName(cfg.scenario));
  }
}

}  // namespace

const std::set<std::string> &PipelineConfig::Keys() {
  static const std::set<std::string> keys = {
      "scenario", "seed", "data_dir", "work_dir", "threads",
      "audio.sample_rate",
      "spectrogram.window_length", "spectrogram.hop_length", "spectrogram.n_fft",
      "lfcc.num_filters", "lfcc.num_coefficients",
      "cqt.f_min", "cqt.bins_per_octave", "cqt.num_bins", "cqt.hop_length",
      "encoder.scale", "densenet.scale", "classifier.scale", "res2net.scale",
      "res2net.stage_widths", "res2net.s", "se.reduction", "classifier.dropout",
      "fusion.face_weight", "fusion.speech_weight", "fusion.map_height", "fusion.map_width",
      "fusion.score_space",
      "train.batch_size", "train.adam_beta1", "train.adam_beta2", "train.adam_epsilon",
      "train.validate_each_epoch", "pretrain.loss",
      "encoder.lr", "encoder.epochs", "densenet.lr", "densenet.epochs",
      "classifier.lr", "classifier.epochs", "pa_encoder.lr", "pa_encoder.epochs",
      "res2net.lr", "res2net.epochs",
      "eval.beta",
      "synth.train_per_class", "synth.dev_per_class", "synth.eval_per_class", "synth.speakers",
      "synth.separation", "synth.duration", "synth.artifact_hz",
  };
  return keys;
}

PipelineConfig PipelineConfig::FromConfig(const Config &c) {
  c.RejectUnknown(Keys());
  PipelineConfig p;
  p.scenario = ParseScenario(c.GetString("scenario", "la"));
  p.seed = static_cast<std::uint64_t>(c.GetInt("seed", 0));
  p.data_dir = c.GetString("data_dir", p.data_dir.string());
  p.work_dir = c.GetString("work_dir", p.work_dir.string());
  p.threads = c.GetSize("threads", p.threads);

  const int sr = static_cast<int>(c.GetInt("audio.sample_rate", 16000));
  p.framing.window_length = c.GetSize("spectrogram.window_length", p.framing.window_length);
  p.framing.hop_length = c.GetSize("spectrogram.hop_length", p.framing.hop_length);
  p.n_fft = c.GetSize("spectrogram.n_fft", p.n_fft);
  p.lfcc.num_filters = c.GetSize("lfcc.num_filters", p.lfcc.num_filters);
  p.lfcc.num_coefficients = c.GetSize("lfcc.num_coefficients", p.lfcc.num_coefficients);
  p.cqt.f_min = c.GetDouble("cqt.f_min", p.cqt.f_min);
  p.cqt.bins_per_octave = c.GetSize("cqt.bins_per_octave", p.cqt.bins_per_octave);
  p.cqt.num_bins = c.GetSize("cqt.num_bins", p.cqt.num_bins);
  p.cqt.hop_length = c.GetSize("cqt.hop_length", p.cqt.hop_length);
  p.cqt.sample_rate = sr;
  p.synth.sample_rate = sr;

  p.encoder_scale = c.GetDouble("encoder.scale", p.encoder_scale);
  p.densenet_scale = c.GetDouble("densenet.scale", p.densenet_scale);
  p.classifier_scale = c.GetDouble("classifier.scale", p.classifier_scale);
  p.res2net_scale = c.GetDouble("res2net.scale", p.res2net_scale);
  if (c.Has("res2net.stage_widths")) {
    p.res2net_widths = ParseSizeList("res2net.stage_widths", c.GetString("res2net.stage_widths", ""));
  }
  p.res2net_s = c.GetSize("res2net.s", p.res2net_s);
  p.se_reduction = c.GetSize("se.reduction", p.se_reduction);
  p.classifier_dropout = c.GetDouble("classifier.dropout", p.classifier_dropout);

  p.fusion.face = c.GetDouble("fusion.face_weight", p.fusion.face);
  p.fusion.speech = c.GetDouble("fusion.speech_weight", p.fusion.speech);
  p.map_height = c.GetSize("fusion.map_height", p.map_height);
  p.map_width = c.GetSize("fusion.map_width", p.map_width);
  p.score_space = ParseScoreSpace(c.GetString("fusion.score_space", "probability"));

  p.batch_size = c.GetSize("train.batch_size", p.batch_size);
  p.adam.beta1 = c.GetDouble("train.adam_beta1", p.adam.beta1);
  p.adam.beta2 = c.GetDouble("train.adam_beta2", p.adam.beta2);
  p.adam.epsilon = c.GetDouble("train.adam_epsilon", p.adam.epsilon);
  p.validate_each_epoch = c.GetBool("train.validate_each_epoch", p.validate_each_epoch);
  const std::string loss = c.GetString("pretrain.loss", "normalized_distance");
  if (loss == "normalized_distance") {
    p.pretrain_form = nn::PretrainForm::kNormalizedDistance;
  } else if (loss == "literal") {
    p.pretrain_form = nn::PretrainForm::kLiteral;
  } else {
    Fail(ErrorKind::kConfig, "pretrain.loss must be literal or normalized_distance");
  }
  p.encoder = ReadStage(c, "encoder", p.encoder);
  p.densenet = ReadStage(c, "densenet", p.densenet);
  p.classifier = ReadStage(c, "classifier", p.classifier);
  p.pa_encoder = ReadStage(c, "pa_encoder", p.pa_encoder);
  p.res2net = ReadStage(c, "res2net", p.res2net);

  p.beta = c.GetDouble("eval.beta", p.beta);
  p.synth.train_per_class = c.GetSize("synth.train_per_class", p.synth.train_per_class);
  p.synth.dev_per_class = c.GetSize("synth.dev_per_class", p.synth.dev_per_class);
  p.synth.eval_per_class = c.GetSize("synth.eval_per_class", p.synth.eval_per_class);
  p.synth.speakers = c.GetSize("synth.speakers", p.synth.speakers);
  p.synth.separation = c.GetDouble("synth.separation", p.synth.separation);
  p.synth.duration = c.GetDouble("synth.duration", p.synth.duration);
  p.synth.artifact_hz = c.GetDouble("synth.artifact_hz", p.synth.artifact_hz);
  p.synth.seed = p.seed;
  p.Validate();
  return p;
}

void PipelineConfig::Validate() const {
  fusion.Validate();
  synth.Validate();
  if (batch_size == 0) Fail(ErrorKind::kConfig, "train.batch_size must be at least 1");
  if (threads == 0) Fail(ErrorKind::kConfig, "threads must be at least 1");
  if (!(beta > 0.0)) Fail(ErrorKind::kConfig, "eval.beta must be positive");
  if (n_fft < framing.window_length) {
    Fail(ErrorKind::kConfig, "spectrogram.n_fft must be at least the window length");
  }
  if (scenario == Scenario::kLa) {
    const std::size_t face = arch::ScaleWidth(arch::kEncoderEmbedding, encoder_scale, "encoder.scale");
    const std::size_t speech = arch::ScaleWidth(128, densenet_scale, "densenet.scale");
    if (face + speech != map_height * map_width) {
      Fail(ErrorKind::kConfig, "fusion map " + std::to_string(map_height) + "x" +
                                   std::to_string(map_width) + " cannot hold " + std::to_string(face) +
                                   " face + " + std::to_string(speech) + " speech features");
    }
  }
}

std::string PipelineConfig::FeatureFingerprint(FeatureKind kind) const {
  std::ostringstream o;
  o << std::setprecision(17) << FeatureKindName(kind) << "|sr=" << cqt.sample_rate;
  switch (kind) {
    case FeatureKind::kSpectrogram:
      o << "|win=" << framing.window_length << "|hop=" << framing.hop_length << "|nfft=" << n_fft;
      break;
    case FeatureKind::kLfcc:
      o << "|win=" << framing.window_length << "|hop=" << framing.hop_length << "|nfft=" << n_fft
        << "|filters=" << lfcc.num_filters << "|coefs=" << lfcc.num_coefficients
        << "|floor=" << lfcc.floor_epsilon;
      break;
    case FeatureKind::kCqt:
      o << "|fmin=" << cqt.f_min << "|bpo=" << cqt.bins_per_octave << "|bins=" << cqt.num_bins
        << "|hop=" << cqt.hop_length;
      break;
  }
  return o.str();
}

fs::path PipelineConfig::ScorePath(Subset subset) const {
  return work_dir / (std::string("scores.") + ScenarioName(scenario) + "." + SubsetName(subset) + ".txt");
}

arch::VoiceEncoderConfig LaEncoderConfig(const PipelineConfig &cfg) {
  RequireScenario(cfg, Scenario::kLa, "LA voice encoder");
  arch::VoiceEncoderConfig e;
  e.variant = arch::EncoderVariant::kLa;
  e.scale = cfg.encoder_scale;
  e.freq_bins = cfg.n_fft / 2 + 1;
  return e;
}

arch::VoiceEncoderConfig PaEncoderConfig(const PipelineConfig &cfg) {
  RequireScenario(cfg, Scenario::kPa, "PA voice encoder");
  arch::VoiceEncoderConfig e;
  e.variant = arch::EncoderVariant::kPa;
  e.scale = cfg.encoder_scale;
  e.freq_bins = cfg.n_fft / 2 + 1;
  return e;
}

arch::SeDenseNetConfig DenseNetConfig(const PipelineConfig &cfg) {
  RequireScenario(cfg, Scenario::kLa, "SE-DenseNet");
  arch::SeDenseNetConfig d;
  d.scale = cfg.densenet_scale;
  d.coefficients = cfg.lfcc.num_coefficients + 1;
  d.se_reduction = cfg.se_reduction;
  return d;
}

arch::ClassifierConfig ClassifierConfigFor(const PipelineConfig &cfg) {
  RequireScenario(cfg, Scenario::kLa, "fusion classifier");
  arch::ClassifierConfig k;
  k.scale = cfg.classifier_scale;
  k.height = cfg.map_height;
  k.width = cfg.map_width;
  k.dropout = cfg.classifier_dropout;
  k.se_reduction = cfg.se_reduction;
  return k;
}

arch::SeRes2NetConfig Res2NetConfig(const PipelineConfig &cfg) {
  RequireScenario(cfg, Scenario::kPa, "SE-Res2Net");
  arch::SeRes2NetConfig r;
  r.scale = cfg.res2net_scale;
  r.cqt_bins = CqtKernel(cfg.cqt).num_bins();
  r.stage_widths = cfg.res2net_widths;
  r.res2_scale = cfg.res2net_s;
  r.se_reduction = cfg.se_reduction;
  return r;
}

std::uint64_t Fnv1a(const void *data, std::size_t size, std::uint64_t h) {
  const auto *p = static_cast<const unsigned char *>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

FeatureMatrix ComputeFeature(const PipelineConfig &cfg, FeatureKind kind, const Waveform &wave) {
  if (wave.sample_rate != cfg.cqt.sample_rate) {
    Fail(ErrorKind::kParameter, "audio is " + std::to_string(wave.sample_rate) +
                                    " Hz, config expects " + std::to_string(cfg.cqt.sample_rate));
  }
  if (kind == FeatureKind::kCqt) return Cqt(wave, CqtKernel(cfg.cqt));
  const ComplexSpectrum spec = Stft(FrameAndWindow(wave, cfg.framing), cfg.n_fft);
  if (kind == FeatureKind::kSpectrogram) return Spectrogram(spec);
  return Lfcc(spec, LinearFilterbank(cfg.lfcc.num_filters, cfg.n_fft, wave.sample_rate), cfg.lfcc);
}

namespace {

std::vector<std::uint8_t> ReadBytes(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kIo, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

std::vector<FeatureMatrix> ExtractFeatures(const PipelineConfig &cfg, const TrialList &trials,
                                           FeatureKind kind) {
  const std::string fp = cfg.FeatureFingerprint(kind);
  const fs::path cache_dir = cfg.work_dir / "cache" / FeatureKindName(kind);
  fs::create_directories(cache_dir);
  std::vector<FeatureMatrix> out(trials.size());
  ParallelFor(trials.size(), cfg.threads, [&](std::size_t i) {
    const Trial &t = trials.trials[i];
    const std::vector<std::uint8_t> bytes = ReadBytes(WavPath(cfg.data_dir, trials.subset, t.utterance_id));
    std::uint64_t h = Fnv1a(bytes.data(), bytes.size());
    h = Fnv1a(fp.data(), fp.size(), h);
    char name[32];
    std::snprintf(name, sizeof name, "%016llx.feat", static_cast<unsigned long long>(h));
    const fs::path cached = cache_dir / name;
    if (fs::exists(cached)) {
      out[i] = LoadFeatures(cached);
      return;
    }
    out[i] = ComputeFeature(cfg, kind, DecodeWav(bytes));
    const fs::path tmp = cached.string() + ".tmp" + std::to_string(i);
    SaveFeatures(tmp, out[i]);
    fs::rename(tmp, cached);
  });
  return out;
}

Normalizer Normalizer::Fit(const std::vector<FeatureMatrix> &feats) {
  if (feats.empty()) Fail(ErrorKind::kTraining, "cannot fit a normaliser on no data");
  Normalizer n;
  n.channels = feats[0].channels;
  n.cols = feats[0].cols;
  const std::size_t g = n.channels * n.cols;
  std::vector<double> sum(g, 0.0), sq(g, 0.0);
  double count = 0.0;
  for (const FeatureMatrix &f : feats) {
    if (f.channels != n.channels || f.cols != n.cols) {
      Fail(ErrorKind::kShape, "features disagree on channel or column count");
    }
    for (std::size_t c = 0; c < f.channels; ++c) {
      for (std::size_t r = 0; r < f.rows; ++r) {
        for (std::size_t k = 0; k < f.cols; ++k) sum[c * n.cols + k] += f.at(c, r, k);
      }
    }
    count += static_cast<double>(f.rows);
  }
  n.mean.resize(g);
  for (std::size_t i = 0; i < g; ++i) n.mean[i] = sum[i] / count;
  for (const FeatureMatrix &f : feats) {
    for (std::size_t c = 0; c < f.channels; ++c) {
      for (std::size_t r = 0; r < f.rows; ++r) {
        for (std::size_t k = 0; k < f.cols; ++k) {
          const double d = f.at(c, r, k) - n.mean[c * n.cols + k];
          sq[c * n.cols + k] += d * d;
        }
      }
    }
  }
  n.inv_std.resize(g);
  for (std::size_t i = 0; i < g; ++i) n.inv_std[i] = 1.0 / std::max(std::sqrt(sq[i] / count), 1e-8);
  return n;
}

nn::Tensor Normalizer::Apply(const FeatureMatrix &f) const {
  if (f.channels != channels || f.cols != cols) {
    Fail(ErrorKind::kShape, "feature layout does not match the fitted normaliser");
  }
  nn::Tensor t({f.channels, f.rows, f.cols});
  for (std::size_t c = 0; c < f.channels; ++c) {
    for (std::size_t r = 0; r < f.rows; ++r) {
      for (std::size_t k = 0; k < f.cols; ++k) {
        const std::size_t g = c * cols + k;
        t.data[(c * f.rows + r) * f.cols + k] = (f.at(c, r, k) - mean[g]) * inv_std[g];
      }
    }
  }
  return t;
}

void Normalizer::Save(const fs::path &path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) Fail(ErrorKind::kIo, "cannot write " + path.string());
  out << std::setprecision(17) << channels << ' ' << cols << '\n';
  for (std::size_t i = 0; i < mean.size(); ++i) out << mean[i] << ' ' << inv_std[i] << '\n';
}

Normalizer Normalizer::Load(const fs::path &path) {
  std::ifstream in(path);
  if (!in) {
    Fail(ErrorKind::kIo, "missing normaliser " + path.string() + "; run `fusioncm train` with this config first");
  }
  Normalizer n;
  in >> n.channels >> n.cols;
  const std::size_t g = n.channels * n.cols;
  n.mean.resize(g);
  n.inv_std.resize(g);
  for (std::size_t i = 0; i < g; ++i) in >> n.mean[i] >> n.inv_std[i];
  if (!in || g == 0) Fail(ErrorKind::kFormat, "corrupt normaliser " + path.string());
  return n;
}

void ParallelFor(std::size_t n, std::size_t threads, const std::function<void(std::size_t)> &fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(threads, n); ++t) pool.emplace_back(worker);
  for (auto &t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

namespace {

constexpr std::size_t kInferBatch = 32;

fs::path CheckpointPath(const PipelineConfig &cfg, const std::string &name) {
  return cfg.ModelDir() / (name + ".ckpt");
}

fs::path NormPath(const PipelineConfig &cfg, const std::string &name) {
  return cfg.ModelDir() / ("norm." + name + ".txt");
}

void LoadModel(const PipelineConfig &cfg, const std::string &name, nn::Model &m) {
  const fs::path p = CheckpointPath(cfg, name);
  if (!fs::exists(p)) {
    Fail(ErrorKind::kIo, "missing checkpoint " + p.string() +
                             "; run `fusioncm train --scenario " + ScenarioName(cfg.scenario) +
                             "` with this config first");
  }
  nn::LoadCheckpoint(p, m);
}

std::vector<int> Labels(const TrialList &trials) {
  std::vector<int> labels;
  for (const Trial &t : trials.trials) {
    if (!t.key) Fail(ErrorKind::kTraining, "utterance '" + t.utterance_id + "' has no key");
    labels.push_back(*t.key == TrialKey::kBonafide ? 0 : 1);
  }
  return labels;
}

std::vector<nn::Tensor> ApplyAll(const Normalizer &n, const std::vector<FeatureMatrix> &feats) {
  std::vector<nn::Tensor> out;
  out.reserve(feats.size());
  for (const FeatureMatrix &f : feats) out.push_back(n.Apply(f));
  return out;
}

// Fixed random unit vector per speaker, standing in for a face embedding.
std::vector<double> SpeakerTarget(const std::string &speaker, std::size_t dim, std::uint64_t seed) {
  Rng rng(Fnv1a(speaker.data(), speaker.size(), seed ^ 0xfaceULL));
  std::vector<double> v(dim);
  double norm = 0.0;
  for (double &x : v) {
    x = rng.Normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (double &x : v) x /= norm;
  return v;
}

train::TrainConfig StageConfig(const PipelineConfig &cfg, const StageTraining &st,
                               std::uint64_t salt, train::LossKind loss) {
  train::TrainConfig t;
  t.optimizer = cfg.adam;
  t.optimizer.learning_rate = st.learning_rate;
  t.epochs = st.epochs;
  t.batch_size = cfg.batch_size;
  t.seed = cfg.seed * 1000003ULL + salt;
  t.loss = loss;
  t.pretrain_form = cfg.pretrain_form;
  return t;
}

// Fusion maps as 1 x 1 x (H*W) features so the normaliser works per element.
std::vector<FeatureMatrix> FusionFeatures(const PipelineConfig &cfg, const nn::Model &encoder,
                                          const nn::Model &densenet,
                                          const std::vector<nn::Tensor> &spec,
                                          const std::vector<nn::Tensor> &lfcc) {
  const auto face = train::InferRows(encoder, spec, encoder.Output("embedding"), kInferBatch);
  const auto speech = train::InferRows(densenet, lfcc, densenet.Output("embedding"), kInferBatch);
  std::vector<FeatureMatrix> out(face.size());
  for (std::size_t i = 0; i < face.size(); ++i) {
    FusionMap m = ConcatFuse(face[i], speech[i], cfg.map_height, cfg.map_width);
    out[i].channels = 1;
    out[i].rows = 1;
    out[i].cols = m.values.size();
    out[i].values = std::move(m.values);
  }
  return out;
}

std::vector<nn::Tensor> AsMaps(const PipelineConfig &cfg, std::vector<nn::Tensor> flat) {
  for (nn::Tensor &t : flat) t.shape = {1, cfg.map_height, cfg.map_width};
  return flat;
}

class Logger {
 public:
  Logger(const fs::path &file, const LogFn &fn) : out_(file, std::ios::binary), fn_(fn) {}
  void operator()(const std::string &line) {
    out_ << line << '\n';
    out_.flush();
    if (fn_) fn_(line);
  }
  train::LogSink Sink(const std::string &stage) {
    return [this, stage](const train::EpochLog &l) { (*this)(stage + ' ' + train::FormatEpochLog(l)); };
  }

 private:
  std::ofstream out_;
  const LogFn &fn_;
};

struct Split {
  TrialList trials;
  std::vector<int> labels;
};

Split LoadSplit(const PipelineConfig &cfg, Subset s) {
  Split sp;
  sp.trials = LoadProtocol(ProtocolPath(cfg.data_dir, s), s);
  if (s != Subset::kEval || !sp.trials.trials.empty()) {
    bool all_keyed = true;
    for (const Trial &t : sp.trials.trials) all_keyed = all_keyed && t.key.has_value();
    if (all_keyed) sp.labels = Labels(sp.trials);
  }
  return sp;
}

void TrainLa(const PipelineConfig &cfg, Logger &log) {
  const Split tr = LoadSplit(cfg, Subset::kTrain);
  if (tr.labels.size() != tr.trials.size()) Fail(ErrorKind::kTraining, "train protocol lacks keys");
  const auto spec = ExtractFeatures(cfg, tr.trials, FeatureKind::kSpectrogram);
  const auto lfcc = ExtractFeatures(cfg, tr.trials, FeatureKind::kLfcc);
  const Normalizer nspec = Normalizer::Fit(spec), nlfcc = Normalizer::Fit(lfcc);
  nspec.Save(NormPath(cfg, "spectrogram"));
  nlfcc.Save(NormPath(cfg, "lfcc"));
  const auto xspec = ApplyAll(nspec, spec);
  const auto xlfcc = ApplyAll(nlfcc, lfcc);

  std::optional<Split> dev;
  std::vector<nn::Tensor> dev_spec, dev_lfcc;
  if (cfg.validate_each_epoch) {
    dev = LoadSplit(cfg, Subset::kDev);
    dev_spec = ApplyAll(nspec, ExtractFeatures(cfg, dev->trials, FeatureKind::kSpectrogram));
    dev_lfcc = ApplyAll(nlfcc, ExtractFeatures(cfg, dev->trials, FeatureKind::kLfcc));
  }

  nn::Model encoder = arch::BuildVoiceEncoder(LaEncoderConfig(cfg));
  encoder.Initialize(cfg.seed * 1000003ULL + 1);
  train::PretrainSet pre;
  pre.inputs = xspec;
  const std::size_t dim = arch::EncoderEmbeddingDim(LaEncoderConfig(cfg));
  for (const Trial &t : tr.trials.trials) pre.targets.push_back(SpeakerTarget(t.speaker_id, dim, cfg.seed));
  train::TrainVoiceEncoder(encoder, pre,
                           StageConfig(cfg, cfg.encoder, 11, train::LossKind::kPretrainL2),
                           log.Sink("encoder"));
  nn::SaveCheckpoint(CheckpointPath(cfg, "voice_encoder"), encoder);

  nn::Model densenet = arch::BuildSeDenseNet(DenseNetConfig(cfg));
  densenet.Initialize(cfg.seed * 1000003ULL + 2);
  train::LabeledSet dn_set{xlfcc, tr.labels};
  train::LabeledSet dn_dev;
  if (dev) dn_dev = {dev_lfcc, dev->labels};
  train::TrainClassifier(densenet, dn_set, StageConfig(cfg, cfg.densenet, 12, train::LossKind::kBce),
                         dev ? &dn_dev : nullptr, log.Sink("se_densenet"));
  nn::SaveCheckpoint(CheckpointPath(cfg, "se_densenet"), densenet);

  const auto fused = FusionFeatures(cfg, encoder, densenet, xspec, xlfcc);
  const Normalizer nfuse = Normalizer::Fit(fused);
  nfuse.Save(NormPath(cfg, "fusion"));
  nn::Model clf = arch::BuildClassifier(ClassifierConfigFor(cfg));
  clf.Initialize(cfg.seed * 1000003ULL + 3);
  train::LabeledSet clf_set{AsMaps(cfg, ApplyAll(nfuse, fused)), tr.labels};
  train::LabeledSet clf_dev;
  if (dev) {
    clf_dev = {AsMaps(cfg, ApplyAll(nfuse, FusionFeatures(cfg, encoder, densenet, dev_spec, dev_lfcc))),
               dev->labels};
  }
  train::TrainClassifier(clf, clf_set, StageConfig(cfg, cfg.classifier, 13, train::LossKind::kBce),
                         dev ? &clf_dev : nullptr, log.Sink("classifier"));
  nn::SaveCheckpoint(CheckpointPath(cfg, "classifier"), clf);
}

void TrainPa(const PipelineConfig &cfg, Logger &log) {
  const Split tr = LoadSplit(cfg, Subset::kTrain);
  if (tr.labels.size() != tr.trials.size()) Fail(ErrorKind::kTraining, "train protocol lacks keys");
  const auto spec = ExtractFeatures(cfg, tr.trials, FeatureKind::kSpectrogram);
  const auto cqt = ExtractFeatures(cfg, tr.trials, FeatureKind::kCqt);
  const Normalizer nspec = Normalizer::Fit(spec), ncqt = Normalizer::Fit(cqt);
  nspec.Save(NormPath(cfg, "spectrogram"));
  ncqt.Save(NormPath(cfg, "cqt"));

  std::optional<Split> dev;
  if (cfg.validate_each_epoch) dev = LoadSplit(cfg, Subset::kDev);

  nn::Model encoder = arch::BuildVoiceEncoder(PaEncoderConfig(cfg));
  encoder.Initialize(cfg.seed * 1000003ULL + 4);
  train::LabeledSet enc_dev;
  if (dev) enc_dev = {ApplyAll(nspec, ExtractFeatures(cfg, dev->trials, FeatureKind::kSpectrogram)), dev->labels};
  train::TrainClassifier(encoder, {ApplyAll(nspec, spec), tr.labels},
                         StageConfig(cfg, cfg.pa_encoder, 14, train::LossKind::kBce),
                         dev ? &enc_dev : nullptr, log.Sink("voice_encoder"));
  nn::SaveCheckpoint(CheckpointPath(cfg, "voice_encoder"), encoder);

  nn::Model res2net = arch::BuildSeRes2Net(Res2NetConfig(cfg));
  res2net.Initialize(cfg.seed * 1000003ULL + 5);
  train::LabeledSet r2_dev;
  if (dev) r2_dev = {ApplyAll(ncqt, ExtractFeatures(cfg, dev->trials, FeatureKind::kCqt)), dev->labels};
  train::TrainClassifier(res2net, {ApplyAll(ncqt, cqt), tr.labels},
                         StageConfig(cfg, cfg.res2net, 15, train::LossKind::kBce),
                         dev ? &r2_dev : nullptr, log.Sink("se_res2net"));
  nn::SaveCheckpoint(CheckpointPath(cfg, "se_res2net"), res2net);
}

}  // namespace

void TrainModels(const PipelineConfig &cfg, const LogFn &log_fn) {
  cfg.Validate();
  fs::create_directories(cfg.ModelDir());
  Logger log(cfg.ModelDir() / "train.log", log_fn);
  if (cfg.scenario == Scenario::kLa) {
    TrainLa(cfg, log);
  } else {
    TrainPa(cfg, log);
  }
}

std::vector<ScoreRecord> ScoreSubset(const PipelineConfig &cfg, Subset subset, const LogFn &log) {
  cfg.Validate();
  const TrialList trials = LoadProtocol(ProtocolPath(cfg.data_dir, subset), subset);
  std::vector<ScoreRecord> records(trials.size());
  for (std::size_t i = 0; i < trials.size(); ++i) {
    records[i].utterance_id = trials.trials[i].utterance_id;
    records[i].key = trials.trials[i].key;
  }
  if (cfg.scenario == Scenario::kLa) {
    nn::Model encoder = arch::BuildVoiceEncoder(LaEncoderConfig(cfg));
    nn::Model densenet = arch::BuildSeDenseNet(DenseNetConfig(cfg));
    nn::Model clf = arch::BuildClassifier(ClassifierConfigFor(cfg));
    LoadModel(cfg, "voice_encoder", encoder);
    LoadModel(cfg, "se_densenet", densenet);
    LoadModel(cfg, "classifier", clf);
    const Normalizer nspec = Normalizer::Load(NormPath(cfg, "spectrogram"));
    const Normalizer nlfcc = Normalizer::Load(NormPath(cfg, "lfcc"));
    const Normalizer nfuse = Normalizer::Load(NormPath(cfg, "fusion"));
    const auto spec = ApplyAll(nspec, ExtractFeatures(cfg, trials, FeatureKind::kSpectrogram));
    const auto lfcc = ApplyAll(nlfcc, ExtractFeatures(cfg, trials, FeatureKind::kLfcc));
    const auto maps = AsMaps(cfg, ApplyAll(nfuse, FusionFeatures(cfg, encoder, densenet, spec, lfcc)));
    const auto lp = train::InferRows(clf, maps, clf.Output("log_probs"), kInferBatch);
    for (std::size_t i = 0; i < lp.size(); ++i) records[i].score = CmScore(lp[i]);
  } else {
    nn::Model encoder = arch::BuildVoiceEncoder(PaEncoderConfig(cfg));
    nn::Model res2net = arch::BuildSeRes2Net(Res2NetConfig(cfg));
    LoadModel(cfg, "voice_encoder", encoder);
    LoadModel(cfg, "se_res2net", res2net);
    const Normalizer nspec = Normalizer::Load(NormPath(cfg, "spectrogram"));
    const Normalizer ncqt = Normalizer::Load(NormPath(cfg, "cqt"));
    const auto spec = ApplyAll(nspec, ExtractFeatures(cfg, trials, FeatureKind::kSpectrogram));
    const auto cqt = ApplyAll(ncqt, ExtractFeatures(cfg, trials, FeatureKind::kCqt));
    const auto face = train::InferRows(encoder, spec, encoder.Output("log_probs"), kInferBatch);
    const auto speech = train::InferRows(res2net, cqt, res2net.Output("log_probs"), kInferBatch);
    for (std::size_t i = 0; i < face.size(); ++i) {
      records[i].score = FuseBackEnd(face[i], speech[i], cfg.fusion, cfg.score_space);
    }
  }
  fs::create_directories(cfg.work_dir);
  SaveScoreFile(cfg.ScorePath(subset), records);
  if (log) log("scored " + std::to_string(records.size()) + " utterances -> " + cfg.ScorePath(subset).string());
  return records;
}

MetricReport RunPipeline(const PipelineConfig &cfg, Subset subset, bool train, const LogFn &log) {
  if (train) TrainModels(cfg, log);
  const std::vector<ScoreRecord> records = ScoreSubset(cfg, subset, log);
  return Evaluate(records, cfg.beta);
}

}  // namespace fusioncm
