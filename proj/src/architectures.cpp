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

#include "fusioncm/architectures.hpp"

#include <cmath>

#include "fusioncm/errors.hpp"

namespace fusioncm::arch {

namespace {

nn::Conv2dOptions ConvOpts(std::size_t in, std::size_t out, std::size_t k, std::size_t pad,
                           bool bias = true) {
  nn::Conv2dOptions o;
  o.in_channels = in;
  o.out_channels = out;
  o.kernel_h = o.kernel_w = k;
  o.Padding(pad);
  o.bias = bias;
  return o;
}

// 4x4 kernels with one row/col of padding before and two after: stride 1
// keeps the extent, stride 2 gives ceil(n / 2).
nn::Conv2dOptions EncoderConv(std::size_t in, std::size_t out, std::size_t stride, bool bias) {
  nn::Conv2dOptions o;
  o.in_channels = in;
  o.out_channels = out;
  o.kernel_h = o.kernel_w = 4;
  o.stride_h = o.stride_w = stride;
  o.pad_top = o.pad_left = 1;
  o.pad_bottom = o.pad_right = 2;
  o.bias = bias;
  return o;
}

nn::PoolOptions Pool2x2() { return nn::PoolOptions{}; }

void AddScoringHead(Model &m, NodeId logits) {
  const NodeId lp = m.LogSoftmax(logits, "log_probs");
  const NodeId p = m.Softmax(logits, "probs");
  m.MarkOutput("log_probs", lp);
  m.MarkOutput("probs", p);
}

}  // namespace

std::size_t ScaleWidth(std::size_t full, double scale, const std::string &what) {
  const double v = static_cast<double>(full) * scale;
  const double r = std::round(v);
  if (!(scale > 0.0) || r < 1.0 || std::abs(v - r) > 1e-9) {
    Fail(ErrorKind::kConfig, what + ": scale " + std::to_string(scale) + " turns width " +
                                 std::to_string(full) + " into a non-integer or zero");
  }
  return static_cast<std::size_t>(r);
}

NodeId AddSeBlock(Model &m, NodeId x, const SeBlockConfig &cfg, const std::string &name) {
  if (cfg.reduction == 0) Fail(ErrorKind::kConfig, name + ": SE reduction must be positive");
  if (m.Channels(x) != cfg.channels) {
    Fail(ErrorKind::kShape, name + ": SE block configured for " + std::to_string(cfg.channels) +
                                " channels, input has " + std::to_string(m.Channels(x)));
  }
  const NodeId s = m.GlobalAvgPool(x, name + ".squeeze");
  NodeId e = m.Dense(s, cfg.bottleneck(), name + ".fc1");
  e = m.Relu(e, name + ".relu");
  e = m.Dense(e, cfg.channels, name + ".fc2");
  e = m.Sigmoid(e, name + ".gate");
  return m.ChannelScale(x, e, name + ".scale");
}

DenseBlockInfo AddDenseBlock(Model &m, NodeId x, const DenseBlockConfig &cfg,
                             const std::string &name) {
  if (cfg.num_layers == 0 || cfg.growth_rate == 0 || cfg.kernel % 2 == 0) {
    Fail(ErrorKind::kConfig, name + ": dense block needs layers >= 1, growth >= 1 and an odd kernel");
  }
  DenseBlockInfo info;
  const std::size_t c0 = m.Channels(x);
  std::vector<NodeId> features{x};
  for (std::size_t l = 1; l <= cfg.num_layers; ++l) {
    const std::string p = name + ".l" + std::to_string(l);
    const NodeId in = features.size() == 1 ? x : m.Concat(features, p + ".cat");
    const std::size_t c_in = m.Channels(in);
    if (c_in != c0 + (l - 1) * cfg.growth_rate) {
      Fail(ErrorKind::kShape, p + ": layer input has " + std::to_string(c_in) +
                                  " channels, expected " +
                                  std::to_string(c0 + (l - 1) * cfg.growth_rate));
    }
    info.layer_input_channels.push_back(c_in);
    info.direct_connections += features.size();
    NodeId h = m.BatchNorm(in, p + ".bn");
    h = m.LeakyRelu(h, p + ".act", cfg.leaky_slope);
    h = m.Conv(h, ConvOpts(c_in, cfg.growth_rate, cfg.kernel, cfg.kernel / 2), p + ".conv");
    features.push_back(h);
  }
  info.output = m.Concat(features, name + ".out");
  info.output_channels = m.Channels(info.output);
  return info;
}

NodeId AddTransition(Model &m, NodeId x, double compression, const std::string &name) {
  if (!(compression > 0.0 && compression <= 1.0)) {
    Fail(ErrorKind::kConfig, name + ": compression must lie in (0, 1]");
  }
  const std::size_t c = m.Channels(x);
  std::size_t out = static_cast<std::size_t>(std::floor(static_cast<double>(c) * compression));
  if (out == 0) out = 1;
  return m.Conv(x, ConvOpts(c, out, 1, 0), name);
}

NodeId AddRes2NetBlock(Model &m, NodeId x, const Res2NetBlockConfig &cfg, const std::string &name) {
  const std::size_t s = cfg.scale;
  if (s == 0 || cfg.width == 0 || cfg.width % s != 0) {
    Fail(ErrorKind::kConfig, name + ": width " + std::to_string(cfg.width) +
                                 " is not divisible by scale " + std::to_string(s));
  }
  if (cfg.out_channels == 0) Fail(ErrorKind::kConfig, name + ": output channels must be positive");
  const std::size_t c_in = m.Channels(x);
  const std::size_t g = cfg.width / s;

  NodeId h = m.Conv(x, ConvOpts(c_in, cfg.width, 1, 0, false), name + ".conv1");
  h = m.BatchNorm(h, name + ".bn1");
  h = m.Relu(h, name + ".relu1");

  std::vector<NodeId> ys;
  NodeId prev = 0;
  for (std::size_t i = 1; i <= s; ++i) {
    const std::string p = name + ".k" + std::to_string(i);
    NodeId xi = s == 1 ? h : m.SliceChannels(h, (i - 1) * g, g, name + ".split" + std::to_string(i));
    if (i == 1) {
      ys.push_back(xi);
      continue;
    }
    if (i > 2) xi = m.Add(xi, prev, p + ".sum");
    NodeId y = m.Conv(xi, ConvOpts(g, g, 3, 1, false), p + ".conv");
    y = m.BatchNorm(y, p + ".bn");
    y = m.Relu(y, p + ".relu");
    ys.push_back(y);
    prev = y;
  }
  NodeId cat = m.Concat(ys, name + ".cat");
  NodeId out = m.Conv(cat, ConvOpts(cfg.width, cfg.out_channels, 1, 0, false), name + ".conv3");
  out = m.BatchNorm(out, name + ".bn3");
  if (cfg.squeeze_excite) {
    out = AddSeBlock(m, out, SeBlockConfig{cfg.out_channels, cfg.se_reduction}, name + ".se");
  }
  NodeId shortcut = x;
  if (c_in != cfg.out_channels) {
    shortcut = m.Conv(x, ConvOpts(c_in, cfg.out_channels, 1, 0, false), name + ".proj");
    shortcut = m.BatchNorm(shortcut, name + ".proj_bn");
  }
  out = m.Add(out, shortcut, name + ".add");
  return m.Relu(out, name + ".relu_out");
}

std::size_t EncoderEmbeddingDim(const VoiceEncoderConfig &cfg) {
  return ScaleWidth(kEncoderEmbedding, cfg.scale, "voice encoder embedding");
}

Model BuildVoiceEncoder(const VoiceEncoderConfig &cfg) {
  if (cfg.freq_bins == 0 || cfg.input_channels == 0) {
    Fail(ErrorKind::kConfig, "voice encoder needs positive input channels and frequency bins");
  }
  Model m({cfg.input_channels, nn::kAnyExtent, cfg.freq_bins},
          {cfg.input_channels, kEncoderMinTime, cfg.freq_bins});
  NodeId h = m.input();
  std::size_t c = cfg.input_channels;
  for (std::size_t i = 0; i < 9; ++i) {
    const std::string p = "conv" + std::to_string(i + 1);
    const std::size_t out = ScaleWidth(kEncoderChannels[i], cfg.scale, p);
    const std::size_t stride = i >= 7 ? 2 : 1;
    const bool last = i == 8;
    h = m.Conv(h, EncoderConv(c, out, stride, last), p);
    if (!last) {
      h = m.BatchNorm(h, p + ".bn");
      h = m.Relu(h, p + ".relu");
    }
    if (i >= 2 && i <= 5) {
      nn::PoolOptions pool;
      pool.kernel_h = 2;
      pool.stride_h = 2;
      pool.kernel_w = pool.stride_w = 1;
      h = m.MaxPool(h, pool, p + ".pool");
    }
    c = out;
  }
  h = m.GlobalAvgPoolTime(h, "avgpool");
  h = m.BatchNorm(h, "avgpool.bn");
  h = m.Relu(h, "avgpool.relu");
  m.MarkOutput("pooled", h);
  const std::size_t d = EncoderEmbeddingDim(cfg);
  h = m.Dense(h, d, "fc1");
  h = m.Relu(h, "fc1.relu");
  if (cfg.variant == EncoderVariant::kLa) {
    h = m.Dense(h, d, "embedding");
    m.MarkOutput("embedding", h);
  } else {
    h = m.Dense(h, 2, "fc2");
    AddScoringHead(m, h);
  }
  return m;
}

Model BuildSeDenseNet(const SeDenseNetConfig &cfg) {
  if (cfg.coefficients == 0) Fail(ErrorKind::kConfig, "SE-DenseNet needs a positive input width");
  Model m({1, nn::kAnyExtent, cfg.coefficients}, {1, 1, cfg.coefficients});
  const std::size_t stem = ScaleWidth(cfg.stem_channels, cfg.scale, "SE-DenseNet stem");
  const std::size_t growth = ScaleWidth(cfg.growth_rate, cfg.scale, "SE-DenseNet growth rate");
  NodeId h = m.Conv(m.input(), ConvOpts(1, stem, 3, 1), "stem");
  for (std::size_t b = 0; b < 4; ++b) {
    const std::string p = "block" + std::to_string(b + 1);
    h = AddSeBlock(m, h, {m.Channels(h), cfg.se_reduction}, p + ".se_in");
    DenseBlockConfig dc;
    dc.num_layers = kDenseBlockLayers[b];
    dc.growth_rate = growth;
    h = AddDenseBlock(m, h, dc, p + ".dense").output;
    h = AddSeBlock(m, h, {m.Channels(h), cfg.se_reduction}, p + ".se_out");
    h = AddTransition(m, h, cfg.compression, p + ".transition");
  }
  h = m.GlobalAvgPool(h, "gap");
  h = m.Dense(h, ScaleWidth(cfg.embedding, cfg.scale, "SE-DenseNet embedding"), "embedding");
  m.MarkOutput("embedding", h);
  h = m.LeakyRelu(h, "embedding.act");
  h = m.Dense(h, 2, "fc_out");
  AddScoringHead(m, h);
  return m;
}

Model BuildSeRes2Net(const SeRes2NetConfig &cfg) {
  if (cfg.stage_widths.empty() || cfg.blocks_per_stage == 0 || cfg.cqt_bins == 0) {
    Fail(ErrorKind::kConfig, "SE-Res2Net needs at least one stage, one block and a CQT width");
  }
  const std::size_t downsample = std::size_t{1} << (cfg.stage_widths.size() - 1);
  if (cfg.cqt_bins < downsample) {
    Fail(ErrorKind::kConfig, "SE-Res2Net: " + std::to_string(cfg.cqt_bins) +
                                 " CQT bins cannot survive " +
                                 std::to_string(cfg.stage_widths.size() - 1) + " 2x2 pools");
  }
  Model m({1, nn::kAnyExtent, cfg.cqt_bins}, {1, downsample, cfg.cqt_bins});
  std::vector<std::size_t> widths;
  for (std::size_t i = 0; i < cfg.stage_widths.size(); ++i) {
    widths.push_back(ScaleWidth(cfg.stage_widths[i], cfg.scale, "SE-Res2Net stage " + std::to_string(i + 1)));
  }
  NodeId h = m.Conv(m.input(), ConvOpts(1, widths[0], 3, 1, false), "stem");
  h = m.BatchNorm(h, "stem.bn");
  h = m.Relu(h, "stem.relu");
  for (std::size_t st = 0; st < widths.size(); ++st) {
    const std::string p = "stage" + std::to_string(st + 1);
    if (st > 0) h = m.MaxPool(h, Pool2x2(), p + ".pool");
    for (std::size_t b = 0; b < cfg.blocks_per_stage; ++b) {
      Res2NetBlockConfig rc;
      rc.width = widths[st];
      rc.out_channels = widths[st];
      rc.scale = cfg.res2_scale;
      rc.se_reduction = cfg.se_reduction;
      h = AddRes2NetBlock(m, h, rc, p + ".block" + std::to_string(b + 1));
    }
  }
  h = m.GlobalAvgPool(h, "gap");
  h = m.Dense(h, 2, "fc_out");
  AddScoringHead(m, h);
  return m;
}

Model BuildClassifier(const ClassifierConfig &cfg) {
  if (cfg.height < 8 || cfg.width < 8) {
    Fail(ErrorKind::kConfig, "classifier input must be at least 8x8 to survive three 2x2 pools");
  }
  Model m({1, cfg.height, cfg.width});
  const std::size_t stem = ScaleWidth(cfg.stem_channels, cfg.scale, "classifier stem");
  const std::size_t growth = ScaleWidth(cfg.growth_rate, cfg.scale, "classifier growth rate");
  NodeId h = m.Conv(m.input(), ConvOpts(1, stem, 3, 1), "stem");
  m.MarkOutput("stage0", h);
  h = AddSeBlock(m, h, {m.Channels(h), cfg.se_reduction}, "se0");
  for (std::size_t b = 0; b < 4; ++b) {
    const std::string p = "block" + std::to_string(b + 1);
    DenseBlockConfig dc;
    dc.num_layers = kDenseBlockLayers[b];
    dc.growth_rate = growth;
    h = AddDenseBlock(m, h, dc, p + ".dense").output;
    h = AddSeBlock(m, h, {m.Channels(h), cfg.se_reduction}, p + ".se");
    h = AddTransition(m, h, cfg.compression, p + ".transition");
    if (b == 0 || b == 2) {
      h = m.MaxPool(h, Pool2x2(), p + ".pool");
    } else if (b == 1) {
      h = m.AvgPool(h, Pool2x2(), p + ".pool");
    }
    if (b < 3) m.MarkOutput("stage" + std::to_string(b + 1), h);
  }
  h = m.GlobalAvgPool(h, "gap");
  m.MarkOutput("stage4", h);
  h = m.Dropout(h, cfg.dropout, "dropout");
  h = m.Dense(h, ScaleWidth(cfg.hidden, cfg.scale, "classifier hidden width"), "fc_hidden");
  h = m.LeakyRelu(h, "fc_hidden.act");
  h = m.Dense(h, 2, "fc_out");
  AddScoringHead(m, h);
  return m;
}

std::vector<std::pair<std::size_t, std::size_t>> ClassifierSpatialTrace(const Model &m) {
  std::vector<std::pair<std::size_t, std::size_t>> trace;
  trace.emplace_back(m.sample_shape().at(1), m.sample_shape().at(2));
  for (int i = 1; i <= 4; ++i) {
    const nn::Shape s = m.SampleShape(m.Output("stage" + std::to_string(i)));
    // GlobalAvgPool yields N x C; report it as 1 x 1.
    trace.emplace_back(s.size() >= 3 ? s[1] : 1, s.size() >= 3 ? s[2] : 1);
  }
  return trace;
}

}  // namespace fusioncm::arch
