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

#include "fusioncm/training.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "fusioncm/errors.hpp"
#include "fusioncm/fusion.hpp"
#include "fusioncm/metrics.hpp"
#include "fusioncm/rng.hpp"

namespace fusioncm::train {

void TrainConfig::Validate() const {
  optimizer.Validate();
  if (epochs == 0) Fail(ErrorKind::kConfig, "epochs must be at least 1");
  if (batch_size == 0) Fail(ErrorKind::kConfig, "batch size must be at least 1");
}

double PresetLearningRate(const std::string &network) {
  if (network == "voice_encoder") return 0.001;
  if (network == "se_densenet") return 0.0005;
  if (network == "se_res2net") return 0.0003;
  Fail(ErrorKind::kConfig, "no learning-rate preset for '" + network + "'");
}

std::size_t PresetEpochs(const std::string &network) {
  if (network == "se_densenet") return 200;
  if (network == "se_res2net") return 20;
  Fail(ErrorKind::kConfig, "no epoch preset for '" + network + "'");
}

std::string FormatEpochLog(const EpochLog &log) {
  std::ostringstream o;
  o.precision(10);
  o << log.epoch << ' ' << log.loss;
  if (log.val_eer) o << ' ' << *log.val_eer;
  return o.str();
}

nn::Tensor Stack(std::span<const nn::Tensor *const> samples) {
  if (samples.empty()) Fail(ErrorKind::kShape, "cannot stack an empty batch");
  const nn::Shape &s = samples[0]->shape;
  nn::Shape shape{samples.size()};
  shape.insert(shape.end(), s.begin(), s.end());
  nn::Tensor out(shape);
  const std::size_t per = samples[0]->size();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i]->shape != s) {
      Fail(ErrorKind::kShape, "batch mixes sample shapes " + nn::ShapeString(s) + " and " +
                                  nn::ShapeString(samples[i]->shape));
    }
    std::copy(samples[i]->data.begin(), samples[i]->data.end(), out.data.begin() + i * per);
  }
  return out;
}

std::vector<std::vector<double>> InferRows(const nn::Model &model, std::span<const nn::Tensor> inputs,
                                           nn::NodeId node, std::size_t batch_size) {
  std::vector<std::vector<double>> rows;
  rows.reserve(inputs.size());
  for (std::size_t b = 0; b < inputs.size(); b += batch_size) {
    const std::size_t e = std::min(inputs.size(), b + batch_size);
    std::vector<const nn::Tensor *> ptrs;
    for (std::size_t i = b; i < e; ++i) ptrs.push_back(&inputs[i]);
    const nn::Tensor out = model.Infer(Stack(ptrs), node);
    const std::size_t per = out.size() / (e - b);
    for (std::size_t i = 0; i < e - b; ++i) {
      rows.emplace_back(out.data.begin() + i * per, out.data.begin() + (i + 1) * per);
    }
  }
  return rows;
}

namespace {

void CheckReady(const nn::Model &model, std::size_t n, const TrainConfig &cfg) {
  cfg.Validate();
  if (!model.initialized()) Fail(ErrorKind::kState, "model must be initialised before training");
  if (n == 0) Fail(ErrorKind::kTraining, "training set is empty");
}

// Runs the shared epoch loop. `step` returns the batch loss after filling
// gradients for the given sample indices.
template <typename StepFn, typename EndFn>
std::vector<EpochLog> RunEpochs(nn::Model &model, std::size_t n, const TrainConfig &cfg,
                                StepFn step, EndFn end_of_epoch, const LogSink &sink) {
  std::vector<EpochLog> history;
  Rng order_rng(cfg.seed);
  model.ReseedRng(cfg.seed ^ 0xd1b54a32d192ed03ULL);
  nn::AdamState adam;
  std::vector<nn::Tensor *> params = model.Parameters();
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    order_rng.Shuffle(order);
    double total = 0.0;
    for (std::size_t b = 0; b < n; b += cfg.batch_size) {
      const std::size_t e = std::min(n, b + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + b, e - b);
      model.ZeroGrad();
      double loss = 0.0;
      try {
        loss = step(idx);
      } catch (const Error &err) {
        if (err.kind() != ErrorKind::kNumeric) throw;
        Fail(ErrorKind::kTraining, "epoch " + std::to_string(epoch) + ": " + err.what());
      }
      if (!std::isfinite(loss)) {
        Fail(ErrorKind::kTraining, "loss diverged in epoch " + std::to_string(epoch));
      }
      try {
        nn::AdamStep(params, adam, cfg.optimizer);
      } catch (const Error &err) {
        Fail(ErrorKind::kTraining, "epoch " + std::to_string(epoch) + ": " + err.what());
      }
      total += loss * static_cast<double>(e - b);
    }
    EpochLog log;
    log.epoch = epoch;
    log.loss = total / static_cast<double>(n);
    end_of_epoch(log);
    if (sink) sink(log);
    history.push_back(log);
    if (cfg.checkpoint_every && !cfg.checkpoint_path.empty() &&
        (epoch % cfg.checkpoint_every == 0 || epoch == cfg.epochs)) {
      nn::SaveCheckpoint(cfg.checkpoint_path, model);
    }
  }
  return history;
}

}  // namespace

std::vector<EpochLog> TrainVoiceEncoder(nn::Model &model, const PretrainSet &data,
                                        const TrainConfig &cfg, const LogSink &sink) {
  CheckReady(model, data.inputs.size(), cfg);
  if (data.targets.size() != data.inputs.size()) {
    Fail(ErrorKind::kShape, "pretraining set has " + std::to_string(data.inputs.size()) +
                                " inputs but " + std::to_string(data.targets.size()) + " targets");
  }
  const nn::NodeId out = model.Output("embedding");
  const std::size_t dim = model.SampleShape(out).at(0);
  for (const auto &t : data.targets) {
    if (t.size() != dim) {
      Fail(ErrorKind::kShape, "target dimension " + std::to_string(t.size()) +
                                  " does not match encoder output " + std::to_string(dim));
    }
  }
  auto step = [&](std::span<const std::size_t> idx) {
    std::vector<const nn::Tensor *> xs;
    nn::Tensor targets({idx.size(), dim});
    for (std::size_t i = 0; i < idx.size(); ++i) {
      xs.push_back(&data.inputs[idx[i]]);
      std::copy(data.targets[idx[i]].begin(), data.targets[idx[i]].end(),
                targets.data.begin() + i * dim);
    }
    nn::Trace trace = model.Forward(Stack(xs), nn::Mode::kTrain);
    const nn::Tensor &pred = trace.at(out);
    nn::LossResult loss = nn::PretrainLossBatch(targets, nn::Tensor({idx.size(), dim}, pred.data),
                                                cfg.pretrain_form);
    loss.grad.shape = pred.shape;
    model.Backward(trace, out, loss.grad);
    return loss.value;
  };
  return RunEpochs(model, data.inputs.size(), cfg, step, [](EpochLog &) {}, sink);
}

double EvaluateEer(const nn::Model &model, const LabeledSet &data) {
  const auto rows = InferRows(model, data.inputs, model.Output("log_probs"));
  std::vector<double> tar, non;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    (data.labels.at(i) == 0 ? tar : non).push_back(CmScore(rows[i]));
  }
  return Eer(ComputeDet(tar, non));
}

std::vector<EpochLog> TrainClassifier(nn::Model &model, const LabeledSet &data, const TrainConfig &cfg,
                                      const LabeledSet *validation, const LogSink &sink) {
  CheckReady(model, data.inputs.size(), cfg);
  if (data.labels.size() != data.inputs.size()) {
    Fail(ErrorKind::kShape, "label count does not match input count");
  }
  for (int l : data.labels) {
    if (l != 0 && l != 1) Fail(ErrorKind::kParameter, "labels must be 0 or 1");
  }
  const nn::NodeId out = model.Output("log_probs");
  auto step = [&](std::span<const std::size_t> idx) {
    std::vector<const nn::Tensor *> xs;
    std::vector<int> labels;
    for (std::size_t i : idx) {
      xs.push_back(&data.inputs[i]);
      labels.push_back(data.labels[i]);
    }
    nn::Trace trace = model.Forward(Stack(xs), nn::Mode::kTrain);
    nn::LossResult loss = nn::BceLoss(trace.at(out), labels);
    model.Backward(trace, out, loss.grad);
    return loss.value;
  };
  auto end = [&](EpochLog &log) {
    if (validation) log.val_eer = EvaluateEer(model, *validation);
  };
  return RunEpochs(model, data.inputs.size(), cfg, step, end, sink);
}

}  // namespace fusioncm::train
