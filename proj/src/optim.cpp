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

#include "fusioncm/optim.hpp"

#include <cmath>

#include "fusioncm/errors.hpp"

namespace fusioncm::nn {

void AdamConfig::Validate() const {
  if (!(learning_rate > 0.0)) Fail(ErrorKind::kParameter, "learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    Fail(ErrorKind::kParameter, "Adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) Fail(ErrorKind::kParameter, "Adam epsilon must be positive");
}

void AdamStep(std::span<Tensor *const> params, AdamState &state, const AdamConfig &cfg) {
  cfg.Validate();
  if (state.first_moment.empty()) {
    for (const Tensor *p : params) {
      state.first_moment.emplace_back(p->size(), 0.0);
      state.second_moment.emplace_back(p->size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    Fail(ErrorKind::kShape, "Adam state tracks a different parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor &p = *params[i];
    if (p.grad.size() != p.size() || state.first_moment[i].size() != p.size()) {
      Fail(ErrorKind::kShape, "gradient/state shape mismatch for parameter " + std::to_string(i));
    }
    for (double g : p.grad) {
      if (!std::isfinite(g)) {
        Fail(ErrorKind::kNumeric, "non-finite gradient in parameter " + std::to_string(i));
      }
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor &p = *params[i];
    auto &m = state.first_moment[i];
    auto &v = state.second_moment[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double g = p.grad[j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      p.data[j] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

LossResult BceLoss(const Tensor &log_probs, std::span<const int> labels) {
  if (log_probs.rank() != 2 || log_probs.dim(1) != 2) {
    Fail(ErrorKind::kShape, "BCE expects N x 2 log-probabilities, got " + ShapeString(log_probs.shape));
  }
  const std::size_t n = log_probs.dim(0);
  if (labels.size() != n) Fail(ErrorKind::kShape, "label count does not match batch size");
  LossResult r;
  r.grad = Tensor(log_probs.shape);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      Fail(ErrorKind::kParameter, "label " + std::to_string(labels[i]) + " is not 0 or 1");
    }
    r.value -= log_probs.at(i, static_cast<std::size_t>(labels[i]));
    r.grad.at(i, static_cast<std::size_t>(labels[i])) = -1.0 / static_cast<double>(n);
  }
  r.value /= static_cast<double>(n);
  return r;
}

namespace {

double Norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

LossResult PretrainLoss(std::span<const double> target, std::span<const double> predicted,
                        PretrainForm form) {
  if (target.size() != predicted.size() || target.empty()) {
    Fail(ErrorKind::kShape, "embedding pair dimensions differ");
  }
  const std::size_t d = target.size();
  LossResult r;
  r.grad = Tensor({d});
  const double nf = Norm(target);
  const double ns = Norm(predicted);
  if (form == PretrainForm::kLiteral) {
    const double diff = nf - ns;
    r.value = diff * diff;
    if (ns > 0.0) {
      // d/dv_s of -(2 diff ||v_s||) = -2 diff v_s / ||v_s||
      for (std::size_t i = 0; i < d; ++i) r.grad[i] = -2.0 * diff * predicted[i] / ns;
    }
    return r;
  }
  if (nf == 0.0 || ns == 0.0) {
    Fail(ErrorKind::kNumeric, "normalized pretraining loss is undefined for a zero vector");
  }
  // u = v_s / ||v_s||, e = u - t_hat, L = |e|^2, dL/dv_s = (2/||v_s||)(e - u (u.e)).
  std::vector<double> u(d), e(d);
  double ue = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    u[i] = predicted[i] / ns;
    e[i] = u[i] - target[i] / nf;
    r.value += e[i] * e[i];
  }
  for (std::size_t i = 0; i < d; ++i) ue += u[i] * e[i];
  for (std::size_t i = 0; i < d; ++i) r.grad[i] = 2.0 / ns * (e[i] - u[i] * ue);
  return r;
}

LossResult PretrainLossBatch(const Tensor &targets, const Tensor &predicted, PretrainForm form) {
  if (targets.shape != predicted.shape || predicted.rank() != 2) {
    Fail(ErrorKind::kShape, "pretraining targets " + ShapeString(targets.shape) +
                                " do not match predictions " + ShapeString(predicted.shape));
  }
  const std::size_t n = predicted.dim(0), d = predicted.dim(1);
  LossResult r;
  r.grad = Tensor(predicted.shape);
  for (std::size_t i = 0; i < n; ++i) {
    const std::span<const double> t(targets.data.data() + i * d, d);
    const std::span<const double> p(predicted.data.data() + i * d, d);
    LossResult one = PretrainLoss(t, p, form);
    r.value += one.value / static_cast<double>(n);
    for (std::size_t j = 0; j < d; ++j) r.grad.at(i, j) = one.grad[j] / static_cast<double>(n);
  }
  return r;
}

}  // namespace fusioncm::nn
