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

// Literal per-element forward passes of the SE, dense and Res2Net blocks,
// reading parameters out of a built model by layer name. Eval mode only.

#include <string>
#include <vector>

#include "fusioncm/layers.hpp"
#include "fusioncm/model.hpp"
#include "support/oracles.hpp"

namespace fusioncm::testing {

// Random parameters and running statistics so eval-mode batchnorm is not the
// identity.
inline void RandomizeState(nn::Model &m, Rng &rng) {
  for (auto &[name, t] : m.NamedState()) {
    const bool var = name.size() >= 11 && name.compare(name.size() - 11, 11, "running_var") == 0;
    for (double &v : t->data) v = var ? rng.Uniform(0.5, 1.5) : rng.Uniform(-0.5, 0.5);
  }
}

template <typename L>
L &LayerAs(const nn::Model &m, const std::string &name) {
  return dynamic_cast<L &>(*m.layer(m.Find(name)));
}

inline Tensor LitConv(const nn::Model &m, const std::string &name, const Tensor &x) {
  auto &c = LayerAs<nn::Conv2d>(m, name);
  const auto &o = c.options();
  ConvSpec s{o.out_channels, o.kernel_h, o.kernel_w, o.stride_h, o.stride_w,
             o.pad_top,      o.pad_bottom, o.pad_left, o.pad_right};
  return NaiveConv(x, c.weight().data, o.bias ? c.bias().data : std::vector<double>{}, s);
}

inline Tensor LitBn(const nn::Model &m, const std::string &name, const Tensor &x) {
  auto &b = LayerAs<nn::BatchNorm>(m, name);
  return NaiveBatchNorm(x, b.gamma().data, b.beta().data, b.running_mean().data, b.running_var().data,
                        b.epsilon());
}

inline Tensor LitDense(const nn::Model &m, const std::string &name, const Tensor &x) {
  auto &f = LayerAs<nn::FullyConnected>(m, name);
  return NaiveDense(x, f.weight().data, f.bias().data, f.out_features());
}

inline Tensor LitLeaky(Tensor x, double slope) {
  for (double &v : x.data) v = v > 0.0 ? v : slope * v;
  return x;
}

// x * sigmoid(fc2(relu(fc1(mean_hw(x))))) per channel.
inline Tensor LiteralSe(const nn::Model &m, const std::string &name, const Tensor &x,
                        Tensor *gate_out = nullptr) {
  const Tensor s = NaiveChannelMean(x);
  Tensor e = LitDense(m, name + ".fc2", NaiveRelu(LitDense(m, name + ".fc1", s)));
  for (double &v : e.data) v = NaiveSigmoid(v);
  Tensor y(x.shape);
  for (std::size_t b = 0; b < x.dim(0); ++b)
    for (std::size_t c = 0; c < x.dim(1); ++c)
      for (std::size_t i = 0; i < x.dim(2); ++i)
        for (std::size_t j = 0; j < x.dim(3); ++j) y.at(b, c, i, j) = x.at(b, c, i, j) * e.at(b, c);
  if (gate_out) *gate_out = e;
  return y;
}

// x_l = H_l([x_0, ..., x_{l-1}]), output [x_0, ..., x_L].
inline Tensor LiteralDenseBlock(const nn::Model &m, const std::string &name, const Tensor &x,
                                std::size_t layers, double slope = 0.01) {
  std::vector<Tensor> feats{x};
  for (std::size_t l = 1; l <= layers; ++l) {
    const std::string p = name + ".l" + std::to_string(l);
    std::vector<const Tensor *> ins;
    for (const Tensor &f : feats) ins.push_back(&f);
    const Tensor in = NaiveConcatChannels(ins);
    feats.push_back(LitConv(m, p + ".conv", LitLeaky(LitBn(m, p + ".bn", in), slope)));
  }
  std::vector<const Tensor *> all;
  for (const Tensor &f : feats) all.push_back(&f);
  return NaiveConcatChannels(all);
}

// y_1 = x_1, y_2 = K_2(x_2), y_i = K_i(x_i + y_{i-1}).
inline Tensor LiteralRes2NetBlock(const nn::Model &m, const std::string &name, const Tensor &x,
                                  std::size_t scale, bool se, bool projection) {
  const Tensor h = NaiveRelu(LitBn(m, name + ".bn1", LitConv(m, name + ".conv1", x)));
  const std::size_t g = h.dim(1) / scale;
  std::vector<Tensor> ys;
  for (std::size_t i = 1; i <= scale; ++i) {
    const Tensor xi = NaiveSliceChannels(h, (i - 1) * g, g);
    if (i == 1) {
      ys.push_back(xi);
      continue;
    }
    const std::string p = name + ".k" + std::to_string(i);
    const Tensor in = i == 2 ? xi : NaiveAdd(xi, ys.back());
    ys.push_back(NaiveRelu(LitBn(m, p + ".bn", LitConv(m, p + ".conv", in))));
  }
  std::vector<const Tensor *> ptrs;
  for (const Tensor &y : ys) ptrs.push_back(&y);
  Tensor out = LitBn(m, name + ".bn3", LitConv(m, name + ".conv3", NaiveConcatChannels(ptrs)));
  if (se) out = LiteralSe(m, name + ".se", out);
  const Tensor sc = projection ? LitBn(m, name + ".proj_bn", LitConv(m, name + ".proj", x)) : x;
  return NaiveRelu(NaiveAdd(out, sc));
}

}  // namespace fusioncm::testing
