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

// Python module _fusioncm. Arrays cross the boundary as float64 numpy
// arrays; library errors surface as fusioncm.Error with a `kind` attribute.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fusioncm/architectures.hpp"
#include "fusioncm/audio.hpp"
#include "fusioncm/config.hpp"
#include "fusioncm/dataset.hpp"
#include "fusioncm/errors.hpp"
#include "fusioncm/features.hpp"
#include "fusioncm/fusion.hpp"
#include "fusioncm/metrics.hpp"
#include "fusioncm/pipeline.hpp"

namespace py = pybind11;
using namespace fusioncm;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> ToVector(const Array &a) {
  if (a.ndim() != 1) throw py::value_error("expected a 1-D array");
  return std::vector<double>(a.data(), a.data() + a.size());
}

Array FromFeatures(const FeatureMatrix &f, bool keep_channels) {
  std::vector<py::ssize_t> shape;
  if (keep_channels) shape.push_back(static_cast<py::ssize_t>(f.channels));
  shape.push_back(static_cast<py::ssize_t>(f.rows));
  shape.push_back(static_cast<py::ssize_t>(f.cols));
  Array out(shape);
  std::copy(f.values.begin(), f.values.end(), out.mutable_data());
  return out;
}

Array FromVector(const std::vector<double> &v) {
  Array out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

Waveform MakeWave(const Array &samples, int sample_rate) {
  Waveform w;
  w.samples = ToVector(samples);
  w.sample_rate = sample_rate;
  return w;
}

ComplexSpectrum StftOf(const Waveform &w, std::size_t window_length, std::size_t hop_length,
                       std::size_t n_fft) {
  return Stft(FrameAndWindow(w, {window_length, hop_length, WindowKind::kHamming}), n_fft);
}

py::dict ReportDict(const MetricReport &r) {
  py::dict d;
  d["n_bonafide"] = r.n_bonafide;
  d["n_spoof"] = r.n_spoof;
  d["eer"] = r.eer;
  d["min_tdcf"] = r.min_tdcf;
  d["beta"] = r.beta;
  return d;
}

PipelineConfig ResolveConfig(const std::string &config_path, const std::map<std::string, std::string> &overrides) {
  Config c = config_path.empty() ? Config() : Config::Load(config_path);
  for (const auto &[k, v] : overrides) c.Set(k, v);
  return PipelineConfig::FromConfig(c);
}

}  // namespace

PYBIND11_MODULE(_fusioncm, m) {
  m.doc() = "Fused voice/face spoofing countermeasure toolkit";

  static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error &e) {
      py::object exc = py::reinterpret_borrow<py::object>(error.ptr())(e.what());
      exc.attr("kind") = ErrorKindName(e.kind());
      PyErr_SetObject(error.ptr(), exc.ptr());
    }
  });

  m.def(
      "load_wav",
      [](const std::filesystem::path &path) {
        const Waveform w = LoadWav(path);
        return py::make_tuple(FromVector(w.samples), w.sample_rate);
      },
      py::arg("path"), "Reads a 16-bit mono PCM WAV file; returns (samples, sample_rate).");
  m.def(
      "write_wav",
      [](const std::filesystem::path &path, const Array &samples, int sample_rate) {
        WriteWav(path, MakeWave(samples, sample_rate));
      },
      py::arg("path"), py::arg("samples"), py::arg("sample_rate"));

  m.def(
      "spectrogram",
      [](const Array &samples, int sample_rate, std::size_t window_length, std::size_t hop_length,
         std::size_t n_fft) {
        return FromFeatures(Spectrogram(StftOf(MakeWave(samples, sample_rate), window_length, hop_length, n_fft)),
                            true);
      },
      py::arg("samples"), py::arg("sample_rate") = 16000, py::arg("window_length") = 400,
      py::arg("hop_length") = 160, py::arg("n_fft") = 512,
      "Magnitude^0.3 and phase, shape (2, frames, n_fft/2 + 1).");
  m.def(
      "lfcc",
      [](const Array &samples, int sample_rate, std::size_t num_filters, std::size_t num_coefficients,
         std::size_t window_length, std::size_t hop_length, std::size_t n_fft) {
        const Waveform w = MakeWave(samples, sample_rate);
        return FromFeatures(Lfcc(StftOf(w, window_length, hop_length, n_fft),
                                 LinearFilterbank(num_filters, n_fft, sample_rate),
                                 {num_filters, num_coefficients, 1e-10}),
                            false);
      },
      py::arg("samples"), py::arg("sample_rate") = 16000, py::arg("num_filters") = 70,
      py::arg("num_coefficients") = 19, py::arg("window_length") = 400, py::arg("hop_length") = 160,
      py::arg("n_fft") = 512, "Shape (frames, num_coefficients + 1).");
  m.def(
      "cqt",
      [](const Array &samples, int sample_rate, double f_min, std::size_t bins_per_octave, std::size_t num_bins,
         std::size_t hop_length) {
        CqtConfig cfg{f_min, bins_per_octave, num_bins, sample_rate, hop_length};
        const CqtKernel kernel(cfg);
        return py::make_tuple(FromFeatures(Cqt(MakeWave(samples, sample_rate), kernel), false),
                              FromVector(kernel.frequencies()));
      },
      py::arg("samples"), py::arg("sample_rate") = 16000, py::arg("f_min") = 20.0,
      py::arg("bins_per_octave") = 12, py::arg("num_bins") = 0, py::arg("hop_length") = 0,
      "Returns (magnitudes of shape (frames, bins), bin frequencies in Hz).");

  m.def(
      "cm_score", [](const Array &log_probs) { return CmScore(ToVector(log_probs)); }, py::arg("log_probs"),
      "log p(bonafide) - log p(spoof).");
  m.def(
      "fuse_back_end",
      [](const Array &face, const Array &speech, double face_weight, double speech_weight,
         const std::string &space) {
        return FuseBackEnd(ToVector(face), ToVector(speech), {face_weight, speech_weight}, ParseScoreSpace(space));
      },
      py::arg("face_log_probs"), py::arg("speech_log_probs"), py::arg("face_weight") = 0.1,
      py::arg("speech_weight") = 0.9, py::arg("space") = "probability");
  m.def(
      "concat_fuse",
      [](const Array &face, const Array &speech, std::size_t height, std::size_t width) {
        const FusionMap f = ConcatFuse(ToVector(face), ToVector(speech), height, width);
        Array out({static_cast<py::ssize_t>(f.height), static_cast<py::ssize_t>(f.width)});
        std::copy(f.values.begin(), f.values.end(), out.mutable_data());
        return out;
      },
      py::arg("face"), py::arg("speech"), py::arg("height") = 64, py::arg("width") = 66);

  m.def(
      "det_curve",
      [](const Array &target, const Array &nontarget) {
        const DetCurve d = ComputeDet(ToVector(target), ToVector(nontarget));
        py::dict out;
        out["thresholds"] = FromVector(d.thresholds);
        out["e_fr"] = FromVector(d.e_fr);
        out["e_fa"] = FromVector(d.e_fa);
        return out;
      },
      py::arg("target"), py::arg("nontarget"));
  m.def(
      "eer", [](const Array &target, const Array &nontarget) { return Eer(ComputeDet(ToVector(target), ToVector(nontarget))); },
      py::arg("target"), py::arg("nontarget"));
  m.def(
      "min_tdcf",
      [](const Array &target, const Array &nontarget, double beta) {
        return MinTdcf(ComputeDet(ToVector(target), ToVector(nontarget)), beta);
      },
      py::arg("target"), py::arg("nontarget"), py::arg("beta") = 1.0);

  m.def(
      "model_summary",
      [](const std::string &network, double scale) {
        nn::Model model = [&] {
          if (network == "voice_encoder_la") return arch::BuildVoiceEncoder({arch::EncoderVariant::kLa, scale});
          if (network == "voice_encoder_pa") return arch::BuildVoiceEncoder({arch::EncoderVariant::kPa, scale});
          if (network == "se_densenet") {
            arch::SeDenseNetConfig c;
            c.scale = scale;
            return arch::BuildSeDenseNet(c);
          }
          if (network == "se_res2net") {
            arch::SeRes2NetConfig c;
            c.scale = scale;
            return arch::BuildSeRes2Net(c);
          }
          if (network == "classifier") {
            arch::ClassifierConfig c;
            c.scale = scale;
            return arch::BuildClassifier(c);
          }
          Fail(ErrorKind::kConfig, "unknown network '" + network + "'");
        }();
        py::dict outputs;
        for (const auto &[name, id] : model.outputs()) outputs[py::str(name)] = model.SampleShape(id);
        py::dict d;
        d["outputs"] = outputs;
        d["parameters"] = model.NumParameters();
        d["nodes"] = model.num_nodes();
        return d;
      },
      py::arg("network"), py::arg("scale") = 1.0,
      "Output shapes and parameter count of an untrained network.");

  m.def(
      "write_synthetic_dataset",
      [](const std::string &config_path, const std::map<std::string, std::string> &overrides,
         const std::optional<std::filesystem::path> &out_dir) {
        const PipelineConfig cfg = ResolveConfig(config_path, overrides);
        WriteSyntheticDataset(cfg.synth, out_dir.value_or(cfg.data_dir));
      },
      py::arg("config_path") = "", py::arg("overrides") = std::map<std::string, std::string>{},
      py::arg("out_dir") = py::none());
  m.def(
      "run_pipeline",
      [](const std::string &config_path, const std::map<std::string, std::string> &overrides,
         const std::string &subset, bool train) {
        const PipelineConfig cfg = ResolveConfig(config_path, overrides);
        MetricReport r;
        {
          py::gil_scoped_release release;
          r = RunPipeline(cfg, ParseSubset(subset), train);
        }
        py::dict d = ReportDict(r);
        d["score_file"] = cfg.ScorePath(ParseSubset(subset)).string();
        return d;
      },
      py::arg("config_path") = "", py::arg("overrides") = std::map<std::string, std::string>{},
      py::arg("subset") = "eval", py::arg("train") = true,
      "Trains (optionally), scores and evaluates one subset; returns the metric report.");
}
