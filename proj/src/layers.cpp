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

#include "fusioncm/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>

#include "fusioncm/errors.hpp"

namespace fusioncm::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void RequireRank(const Shape &s, std::size_t rank, const char *what) {
  if (s.size() != rank) {
    Fail(ErrorKind::kShape, std::string(what) + " expects a rank-" + std::to_string(rank) +
                                " input, got " + ShapeString(s));
  }
}

void KaimingUniform(Tensor &t, std::size_t fan_in, Rng &rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (double &v : t.data) v = rng.Uniform(-bound, bound);
}

// Views an input as N x C x S, S = product of trailing axes.
struct Nc {
  std::size_t n, c, s;
};

Nc AsNcs(const Shape &shape) {
  std::size_t s = 1;
  for (std::size_t i = 2; i < shape.size(); ++i) s *= shape[i];
  return {shape[0], shape[1], s};
}

std::size_t PoolExtent(std::size_t in, std::size_t k, std::size_t s, const char *what) {
  if (in < k) {
    Fail(ErrorKind::kShape, std::string(what) + " window " + std::to_string(k) +
                                " larger than input extent " + std::to_string(in));
  }
  return (in - k) / s + 1;
}

}  // namespace

std::string LayerKindName(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv2d: return "conv2d";
    case LayerKind::kBatchNorm: return "batchnorm";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kLeakyRelu: return "leaky_relu";
    case LayerKind::kSigmoid: return "sigmoid";
    case LayerKind::kMaxPool: return "maxpool";
    case LayerKind::kAvgPool: return "avgpool";
    case LayerKind::kGlobalAvgPoolTime: return "global_avgpool_time";
    case LayerKind::kGlobalAvgPool: return "global_avgpool";
    case LayerKind::kFullyConnected: return "fully_connected";
    case LayerKind::kSoftmax: return "softmax";
    case LayerKind::kLogSoftmax: return "log_softmax";
    case LayerKind::kDropout: return "dropout";
    case LayerKind::kConcat: return "concat";
    case LayerKind::kAdd: return "add";
    case LayerKind::kReshape: return "reshape";
    case LayerKind::kChannelScale: return "channel_scale";
    case LayerKind::kSliceChannels: return "slice_channels";
  }
  return "unknown";
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(const Conv2dOptions &opts) : opts_(opts) {
  if (opts.in_channels == 0 || opts.out_channels == 0 || opts.kernel_h == 0 ||
      opts.kernel_w == 0 || opts.stride_h == 0 || opts.stride_w == 0) {
    Fail(ErrorKind::kParameter, "conv2d channels, kernel and stride must be positive");
  }
}

Shape Conv2d::OutputShape(std::span<const Shape> inputs) const {
  const Shape &in = inputs[0];
  RequireRank(in, 4, "conv2d");
  if (in[1] != opts_.in_channels) {
    Fail(ErrorKind::kShape, "conv2d expects " + std::to_string(opts_.in_channels) +
                                " input channels, got " + std::to_string(in[1]));
  }
  const std::size_t h = in[2] + opts_.pad_top + opts_.pad_bottom;
  const std::size_t w = in[3] + opts_.pad_left + opts_.pad_right;
  if (h < opts_.kernel_h || w < opts_.kernel_w) {
    Fail(ErrorKind::kShape, "conv2d kernel larger than padded input " + ShapeString(in));
  }
  return {in[0], opts_.out_channels, (h - opts_.kernel_h) / opts_.stride_h + 1,
          (w - opts_.kernel_w) / opts_.stride_w + 1};
}

void Conv2d::InitParameters(Rng &rng) {
  weight_ = Tensor({opts_.out_channels, opts_.in_channels, opts_.kernel_h, opts_.kernel_w});
  KaimingUniform(weight_, opts_.in_channels * opts_.kernel_h * opts_.kernel_w, rng);
  weight_.EnableGrad();
  if (opts_.bias) {
    bias_ = Tensor({opts_.out_channels});
    bias_.EnableGrad();
  }
}

std::vector<NamedTensor> Conv2d::State() {
  std::vector<NamedTensor> out{{"weight", &weight_, true}};
  if (opts_.bias) out.push_back({"bias", &bias_, true});
  return out;
}

namespace {

// Output columns [first, last) whose input column x * stride + k - pad is
// inside [0, w).
void ValidRange(std::size_t ow, std::size_t stride, std::size_t k, std::size_t pad, std::size_t w,
                std::size_t &first, std::size_t &last) {
  first = pad > k ? (pad - k + stride - 1) / stride : 0;
  // x * stride + k - pad <= w - 1  <=>  x <= (w - 1 + pad - k) / stride
  if (w + pad < k + 1) {
    first = last = 0;
    return;
  }
  last = std::min(ow, (w - 1 + pad - k) / stride + 1);
  if (first > last) first = last;
}

// Scratch buffers reused across calls; contents are always overwritten.
std::vector<double> &Scratch(int slot, std::size_t size) {
  thread_local std::vector<double> buffers[2];
  std::vector<double> &b = buffers[slot];
  if (b.size() < size) b.resize(size);
  return b;
}

}  // namespace

void Conv2d::Im2Col(const double *image, std::size_t h, std::size_t w, std::size_t oh,
                    std::size_t ow, double *cols) const {
  const std::size_t p = oh * ow;
  const std::size_t sw = opts_.stride_w;
  const bool padded = opts_.pad_top || opts_.pad_bottom || opts_.pad_left || opts_.pad_right;
  // One bulk clear instead of many tiny ones for the padding cells.
  if (padded) std::fill(cols, cols + opts_.in_channels * opts_.kernel_h * opts_.kernel_w * p, 0.0);
  for (std::size_t c = 0; c < opts_.in_channels; ++c) {
    const double *plane = image + c * h * w;
    for (std::size_t ki = 0; ki < opts_.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < opts_.kernel_w; ++kj) {
        double *row = cols + ((c * opts_.kernel_h + ki) * opts_.kernel_w + kj) * p;
        std::size_t x0, x1;
        ValidRange(ow, sw, kj, opts_.pad_left, w, x0, x1);
        for (std::size_t y = 0; y < oh; ++y) {
          const auto iy = static_cast<std::ptrdiff_t>(y * opts_.stride_h + ki) -
                          static_cast<std::ptrdiff_t>(opts_.pad_top);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          double *dst = row + y * ow;
          const double *src = plane + static_cast<std::size_t>(iy) * w + x0 * sw + kj - opts_.pad_left;
          if (sw == 1) {
            std::copy(src, src + (x1 - x0), dst + x0);
          } else {
            for (std::size_t x = x0; x < x1; ++x) dst[x] = src[(x - x0) * sw];
          }
        }
      }
    }
  }
}

void Conv2d::Col2Im(const double *cols, std::size_t h, std::size_t w, std::size_t oh,
                    std::size_t ow, double *image) const {
  const std::size_t p = oh * ow;
  const std::size_t sw = opts_.stride_w;
  for (std::size_t c = 0; c < opts_.in_channels; ++c) {
    double *plane = image + c * h * w;
    for (std::size_t ki = 0; ki < opts_.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < opts_.kernel_w; ++kj) {
        const double *row = cols + ((c * opts_.kernel_h + ki) * opts_.kernel_w + kj) * p;
        std::size_t x0, x1;
        ValidRange(ow, sw, kj, opts_.pad_left, w, x0, x1);
        for (std::size_t y = 0; y < oh; ++y) {
          const auto iy = static_cast<std::ptrdiff_t>(y * opts_.stride_h + ki) -
                          static_cast<std::ptrdiff_t>(opts_.pad_top);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          double *dst = plane + static_cast<std::size_t>(iy) * w + x0 * sw + kj - opts_.pad_left;
          const double *src = row + y * ow;
          for (std::size_t x = x0; x < x1; ++x) dst[(x - x0) * sw] += src[x];
        }
      }
    }
  }
}

bool Conv2d::IsPointwise() const {
  return opts_.kernel_h == 1 && opts_.kernel_w == 1 && opts_.stride_h == 1 && opts_.stride_w == 1 &&
         opts_.pad_top == 0 && opts_.pad_bottom == 0 && opts_.pad_left == 0 && opts_.pad_right == 0;
}

void Conv2d::Forward(std::span<const Tensor *const> inputs, Tensor &output, ForwardContext &) {
  const Tensor &x = *inputs[0];
  const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = output.dim(2), ow = output.dim(3);
  const std::size_t k = opts_.in_channels * opts_.kernel_h * opts_.kernel_w;
  const std::size_t p = oh * ow;
  const bool pointwise = IsPointwise();
  double *cols = pointwise ? nullptr : Scratch(0, k * p).data();
  ConstMapMat wmat(weight_.data.data(), static_cast<Eigen::Index>(opts_.out_channels),
                   static_cast<Eigen::Index>(k));
  for (std::size_t s = 0; s < n; ++s) {
    const double *sample = x.data.data() + s * opts_.in_channels * h * w;
    if (!pointwise) Im2Col(sample, h, w, oh, ow, cols);
    ConstMapMat cmat(pointwise ? sample : cols, static_cast<Eigen::Index>(k),
                     static_cast<Eigen::Index>(p));
    MapMat out(output.data.data() + s * opts_.out_channels * p,
               static_cast<Eigen::Index>(opts_.out_channels), static_cast<Eigen::Index>(p));
    out.noalias() = wmat * cmat;
    if (opts_.bias) {
      for (std::size_t o = 0; o < opts_.out_channels; ++o) {
        out.row(static_cast<Eigen::Index>(o)).array() += bias_.data[o];
      }
    }
  }
}

void Conv2d::Backward(std::span<const Tensor *const> inputs, const Tensor &,
                      const Tensor &grad_output, std::span<Tensor *const> grad_inputs,
                      const LayerCache &) {
  const Tensor &x = *inputs[0];
  const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = grad_output.dim(2), ow = grad_output.dim(3);
  const std::size_t k = opts_.in_channels * opts_.kernel_h * opts_.kernel_w;
  const std::size_t p = oh * ow;
  const auto out_c = static_cast<Eigen::Index>(opts_.out_channels);
  const bool pointwise = IsPointwise();
  double *cols = pointwise ? nullptr : Scratch(0, k * p).data();
  double *dcols = pointwise ? nullptr : Scratch(1, k * p).data();
  ConstMapMat wmat(weight_.data.data(), out_c, static_cast<Eigen::Index>(k));
  MapMat dw(weight_.grad.data(), out_c, static_cast<Eigen::Index>(k));
  for (std::size_t s = 0; s < n; ++s) {
    ConstMapMat dy(grad_output.data.data() + s * opts_.out_channels * p, out_c,
                   static_cast<Eigen::Index>(p));
    const double *sample = x.data.data() + s * opts_.in_channels * h * w;
    if (!pointwise) Im2Col(sample, h, w, oh, ow, cols);
    ConstMapMat cmat(pointwise ? sample : cols, static_cast<Eigen::Index>(k),
                     static_cast<Eigen::Index>(p));
    dw.noalias() += dy * cmat.transpose();
    if (opts_.bias) {
      for (std::size_t o = 0; o < opts_.out_channels; ++o) {
        bias_.grad[o] += dy.row(static_cast<Eigen::Index>(o)).sum();
      }
    }
    if (grad_inputs[0] != nullptr) {
      double *gx = grad_inputs[0]->data.data() + s * opts_.in_channels * h * w;
      if (pointwise) {
        MapMat dx(gx, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p));
        dx.noalias() += wmat.transpose() * dy;
      } else {
        MapMat dc(dcols, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p));
        dc.noalias() = wmat.transpose() * dy;
        Col2Im(dcols, h, w, oh, ow, gx);
      }
    }
  }
}

// ------------------------------------------------------------- BatchNorm

BatchNorm::BatchNorm(std::size_t channels, bool affine, double momentum, double epsilon)
    : channels_(channels), affine_(affine), momentum_(momentum), epsilon_(epsilon) {
  if (channels == 0) Fail(ErrorKind::kParameter, "batchnorm needs at least one channel");
}

Shape BatchNorm::OutputShape(std::span<const Shape> inputs) const {
  const Shape &in = inputs[0];
  if (in.size() < 2 || in[1] != channels_) {
    Fail(ErrorKind::kShape, "batchnorm expects " + std::to_string(channels_) +
                                " channels on axis 1, got " + ShapeString(in));
  }
  return in;
}

void BatchNorm::InitParameters(Rng &) {
  running_mean_ = Tensor({channels_}, 0.0);
  running_var_ = Tensor({channels_}, 1.0);
  if (affine_) {
    gamma_ = Tensor({channels_}, 1.0);
    beta_ = Tensor({channels_}, 0.0);
    gamma_.EnableGrad();
    beta_.EnableGrad();
  }
}

std::vector<NamedTensor> BatchNorm::State() {
  std::vector<NamedTensor> out;
  if (affine_) {
    out.push_back({"gamma", &gamma_, true});
    out.push_back({"beta", &beta_, true});
  }
  out.push_back({"running_mean", &running_mean_, false});
  out.push_back({"running_var", &running_var_, false});
  return out;
}

void BatchNorm::Forward(std::span<const Tensor *const> inputs, Tensor &output,
                        ForwardContext &ctx) {
  const Tensor &x = *inputs[0];
  const Nc d = AsNcs(x.shape);
  const double m = static_cast<double>(d.n * d.s);
  if (ctx.mode == Mode::kEval) {
    for (std::size_t c = 0; c < d.c; ++c) {
      const double inv = 1.0 / std::sqrt(running_var_.data[c] + epsilon_);
      const double g = affine_ ? gamma_.data[c] : 1.0;
      const double b = affine_ ? beta_.data[c] : 0.0;
      for (std::size_t i = 0; i < d.n; ++i) {
        const std::size_t base = (i * d.c + c) * d.s;
        for (std::size_t j = 0; j < d.s; ++j) {
          output.data[base + j] = g * (x.data[base + j] - running_mean_.data[c]) * inv + b;
        }
      }
    }
    return;
  }
  // Cache layout: xhat (same size as x) followed by inv_std per channel.
  LayerCache &cache = *ctx.cache;
  cache.values.resize(x.size() + d.c);
  double *xhat = cache.values.data();
  double *inv_std = xhat + x.size();
  for (std::size_t c = 0; c < d.c; ++c) {
    double mean = 0.0;
    for (std::size_t i = 0; i < d.n; ++i) {
      const std::size_t base = (i * d.c + c) * d.s;
      for (std::size_t j = 0; j < d.s; ++j) mean += x.data[base + j];
    }
    mean /= m;
    double var = 0.0;
    for (std::size_t i = 0; i < d.n; ++i) {
      const std::size_t base = (i * d.c + c) * d.s;
      for (std::size_t j = 0; j < d.s; ++j) {
        const double dv = x.data[base + j] - mean;
        var += dv * dv;
      }
    }
    var /= m;
    inv_std[c] = 1.0 / std::sqrt(var + epsilon_);
    const double g = affine_ ? gamma_.data[c] : 1.0;
    const double b = affine_ ? beta_.data[c] : 0.0;
    for (std::size_t i = 0; i < d.n; ++i) {
      const std::size_t base = (i * d.c + c) * d.s;
      for (std::size_t j = 0; j < d.s; ++j) {
        const double xh = (x.data[base + j] - mean) * inv_std[c];
        xhat[base + j] = xh;
        output.data[base + j] = g * xh + b;
      }
    }
    running_mean_.data[c] = (1.0 - momentum_) * running_mean_.data[c] + momentum_ * mean;
    const double unbiased = m > 1.0 ? var * m / (m - 1.0) : var;
    running_var_.data[c] = (1.0 - momentum_) * running_var_.data[c] + momentum_ * unbiased;
  }
}

void BatchNorm::Backward(std::span<const Tensor *const> inputs, const Tensor &,
                         const Tensor &grad_output, std::span<Tensor *const> grad_inputs,
                         const LayerCache &cache) {
  const Tensor &x = *inputs[0];
  const Nc d = AsNcs(x.shape);
  const double m = static_cast<double>(d.n * d.s);
  const double *xhat = cache.values.data();
  const double *inv_std = xhat + x.size();
  const std::vector<double> &dy = grad_output.data;
  for (std::size_t c = 0; c < d.c; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t i = 0; i < d.n; ++i) {
      const std::size_t base = (i * d.c + c) * d.s;
      for (std::size_t j = 0; j < d.s; ++j) {
        sum_dy += dy[base + j];
        sum_dy_xhat += dy[base + j] * xhat[base + j];
      }
    }
    const double g = affine_ ? gamma_.data[c] : 1.0;
    if (affine_) {
      gamma_.grad[c] += sum_dy_xhat;
      beta_.grad[c] += sum_dy;
    }
    if (grad_inputs[0] == nullptr) continue;
    double *dx = grad_inputs[0]->data.data();
    const double scale = g * inv_std[c] / m;
    for (std::size_t i = 0; i < d.n; ++i) {
      const std::size_t base = (i * d.c + c) * d.s;
      for (std::size_t j = 0; j < d.s; ++j) {
        dx[base + j] += scale * (m * dy[base + j] - sum_dy - xhat[base + j] * sum_dy_xhat);
      }
    }
  }
}

// ----------------------------------------------------------- activations

void Relu::Forward(std::span<const Tensor *const> inputs, Tensor &output, ForwardContext &) {
  const auto &x = inputs[0]->data;
  for (std::size_t i = 0; i < x.size(); ++i) output.data[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void Relu::Backward(std::span<const Tensor *const> inputs, const Tensor &,
                    const Tensor &grad_output, std::span<Tensor *const> grad_inputs,
                    const LayerCache &) {
  if (grad_inputs[0] == nullptr) return;
  const auto &x = inputs[0]->data;
  auto &dx = grad_inputs[0]->data;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] > 0.0) dx[i] += grad_output.data[i];
  }
}

void LeakyRelu::Forward(std::span<const Tensor *const> inputs, Tensor &output, ForwardContext &) {
  const auto &x = inputs[0]->data;
  for (std::size_t i = 0; i < x.size(); ++i) output.data[i] = x[i] > 0.0 ? x[i] : slope_ * x[i];
}

void LeakyRelu::Backward(std::span<const Tensor *const> inputs, const Tensor &,
                         const Tensor &grad_output, std::span<Tensor *const> grad_inputs,
                         const LayerCache &) {
  if (grad_inputs[0] == nullptr) return;
  const auto &x = inputs[0]->data;
  auto &dx = grad_inputs[0]->data;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dx[i] += x[i] > 0.0 ? grad_output.data[i] : slope_ * grad_output.data[i];
  }
}

void Sigmoid::Forward(std::span<const Tensor *const> inputs, Tensor &output, ForwardContext &) {
  const auto &x = inputs[0]->data;
  for (std::size_t i = 0; i < x.size(); ++i) {
    // Split by sign so exp never overflows.
    if (x[i] >= 0.0) {
      output.data[i] = 1.0 / (1.0 + std::exp(-x[i]));
    } else {
      const double e = std::exp(x[i]);
      output.data[i] = e / (1.0 + e);
    }
  }
}

void Sigmoid::Backward(std::span<const Tensor *const>, const Tensor &output,
                       const Tensor &grad_output, std::span<Tensor *const> grad_inputs,
                       const LayerCache &) {
  if (grad_inputs[0] == nullptr) return;
  auto &dx = grad_inputs[0]->data;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    const double y = output.data[i];
    dx[i] += grad_output.data[i] * y * (1.0 - y);
  }
}

// --------------------------------------------------------------- pooling

Shape MaxPool::OutputShape(std::span<const Shape> inputs) const {
  const Shape &in = inputs[0];
  RequireRank(in, 4, "maxpool");
  return {in[0], in[1], PoolExtent(in[2], opts_.kernel_h, opts_.stride_h, "maxpool"),
          PoolExtent(in[3], opts_.kernel_w, opts_.stride_w, "maxpool")};
}

void MaxPool::Forward(std::span<const Tensor *const> inputs, Tensor &output, ForwardContext &ctx) {
  const Tensor &x = *inputs[0];
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = output.dim(2), ow = output.dim(3);
  std::vector<std::size_t> *argmax = nullptr;
  if (ctx.mode == Mode::kTrain) {
    argmax = &ctx.cache->indices;
    argmax->resize(output.size());
  }
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const double *src = x.data.data() + pl * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xo = 0; xo < ow; ++xo) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t i = 0; i < opts_.kernel_h; ++i) {
          for (std::size_t j = 0; j < opts_.kernel_w; ++j) {
            const std::size_t idx = (y * opts_.stride_h + i) * w + xo * opts_.stride_w + j;
            if (src[idx] > best) {
              best = src[idx];
              best_idx = idx;
            }
          }
        }
        const std::size_t o = (pl * oh + y) * ow + xo;
        output.data[o] = best;
        if (argmax) (*argmax)[o] = pl * h * w + best_idx;
      }
    }
  }
}

void MaxPool::Backward(std::span<const Tensor *const>, const Tensor &,
                       const Tensor &grad_output, std::span<Tensor *const> grad_inputs,
                       const LayerCache &cache) {
  if (grad_inputs[0] == nullptr) return;
  auto &dx = grad_inputs[0]->data;
  for (std::size_t o = 0; o < grad_output.size(); ++o) dx[cache.indices[o]] += grad_output.data[o];
}

Shape AvgPool::OutputShape(std::span<const Shape> inputs) const {
  const Shape &in = inputs[0];
  RequireRank(in, 4, "avgpool");
  return {in[0], in[1], PoolExtent(in[2], opts_.kernel_h, opts_.stride_h, "avgpool"),
          PoolExtent(in[3], opts_.kernel_w, opts_.stride_w, "avgpool")};
}

void AvgPool::Forward(std::span<const Tensor *const> inputs, Tensor &output, ForwardContext &) {
  const Tensor &x = *inputs[0];
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = output.dim(2), ow = output.dim(3);
  const double inv = 1.0 / static_cast<double>(opts_.kernel_h * opts_.kernel_w);
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const double *src = x.data.data() + pl * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xo = 0; xo < ow; ++xo) {
        double acc = 0.0;
        for (std::size_t i = 0; i < opts_.kernel_h; ++i) {
          for (std::size_t j = 0; j < opts_.kernel_w; ++j) {
            acc += src[(y * opts_.stride_h + i) * w + xo * opts_.stride_w + j];
          }
        }
        output.data[(pl * oh + y) * ow + xo] = acc * inv;
      }
    }
  }
}

void AvgPool::Backward(std::span<const Tensor *const> inputs, const Tensor &,
                       const Tensor &grad_output, std::span<Tensor *const> grad_inputs,
                       const LayerCache &) {
  if (grad_inputs[0] == nullptr) return;
  const Tensor &x = *inputs[0];
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = grad_output.dim(2), ow = grad_output.dim(3);
  const double inv = 1.0 / static_cast<double>(opts_.kernel_h * opts_.kernel_w);
  auto &dx = grad_inputs[0]->data;
  for (std::size_t pl = 0; pl < planes; ++pl) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xo = 0; xo < ow; ++xo) {
        const double g = grad_output.data[(pl * oh + y) * ow + xo] * inv;
        for (std::size_t i = 0; i < opts_.kernel_h; ++i) {
          for (std::size_t j = 0; j < opts_.kernel_w; ++j) {
            dx[pl * h * w + (y * opts_.stride_h + i) * w + xo * opts_.stride_w + j] += g;
          }
        }
      }
    }
  }
}

Shape GlobalAvgPoolTime::OutputShape(std::span<const Shape> inputs) const {
  const Shape &in = inputs[0];
  RequireRank(in, 4, "global_avgpool_time");
  return {in[0], in[1], 1, in[3]};
}

void GlobalAvgPoolTime::Forward(std::span<const Tensor *const> inputs, Tensor &output,
                                ForwardContext &) {
  const Tensor &x = *inputs[0];
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  for (std::size_t pl = 0; pl < planes; ++pl) {
    for (std::size_t j = 0; j < w; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < h; ++i) acc += x.data[(pl * h + i) * w + j];
      output.data[pl * w + j] = acc / static_cast<double>(h);
    }
  }
}

void GlobalAvgPoolTime::Backward(std::span<const Tensor *const> inputs, const Tensor &,
                                 const Tensor &grad_output, std::span<Tensor *const> grad_inputs,
                                 const LayerCache &) {
  if (grad_inputs[0] == nullptr) return;
  const Tensor &x = *inputs[0];
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  auto &dx = grad_inputs[0]->data;
  for (std::size_t pl = 0; pl < planes; ++pl) {
    for (std::size_t j = 0; j < w; ++j) {
      const double g = grad_output.data[pl * w + j] / static_cast<double>(h);
      for (std::size_t i = 0; i < h; ++i) dx[(pl * h + i) * w + j] += g;
    }
  }
}

Shape GlobalAvgPool::OutputShape(std::span<const Shape> inputs) const {
  const Shape &in = inputs[0];
  RequireRank(in, 4, "global_avgpool");
  return {in[0], in[1]};
}

void GlobalAvgPool::Forward(std::span<const Tensor *const> inputs, Tensor &output,
                            ForwardContext &) {
  const Tensor &x = *inputs[0];
  const std::size_t planes = x.dim(0) * x.dim(1), s = x.dim(2) * x.dim(3);
  for (std::size_t pl = 0; pl < planes; ++pl) {
    double acc = 0.0;
    for (std::size_t j = 0; j < s; ++j) acc += x.data[pl * s + j];
    output.data[pl] = acc / static_cast<double>(s);
  }
}

void GlobalAvgPool::Backward(std::span<const Tensor *const> inputs, const Tensor &,
                             const Tensor &grad_output, std::span<Tensor *const> grad_inputs,
                             const LayerCache &) {
  if (grad_inputs[0] == nullptr) return;
  const Tensor &x = *inputs[0];
  const std::size_t planes = x.dim(0) * x.dim(1), s = x.dim(2) * x.dim(3);
  auto &dx = grad_inputs[0]->data;
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const double g = grad_output.data[pl] / static_cast<double>(s);
    for (std::size_t j = 0; j < s; ++j) dx[pl * s + j] += g;
  }
}

// -------------------------------------------------------- FullyConnected

FullyConnected::FullyConnected(std::size_t in_features, std::size_t out_features, bool bias)
    : in_(in_features), out_(out_features), has_bias_(bias) {
  if (in_ == 0 || out_ == 0) Fail(ErrorKind::kParameter, "fully_connected sizes must be positive");
}

Shape FullyConnected::OutputShape(std::span<const Shape> inputs) const {
  const Shape &in = inputs[0];
  if (in.size() < 2) Fail(ErrorKind::kShape, "fully_connected needs a batched input");
  std::size_t features = 1;
  for (std::size_t i = 1; i < in.size(); ++i) features *= in[i];
  if (features != in_) {
    Fail(ErrorKind::kShape, "fully_connected expects " + std::to_string(in_) +
                                " input features, got " + ShapeString(in));
  }
  return {in[0], out_};
}

void FullyConnected::InitParameters(Rng &rng) {
  weight_ = Tensor({out_, in_});
  KaimingUniform(weight_, in_, rng);
  weight_.EnableGrad();
  if (has_bias_) {
    bias_ = Tensor({out_});
    bias_.EnableGrad();
  }
}

std::vector<NamedTensor> FullyConnected::State() {
  std::vector<NamedTensor> out{{"weight", &weight_, true}};
  if (has_bias_) out.push_back({"bias", &bias_, true});
  return out;
}

void FullyConnected::Forward(std::span<const Tensor *const> inputs, Tensor &output,
                             ForwardContext &) {
  const Tensor &x = *inputs[0];
  const auto n = static_cast<Eigen::Index>(x.dim(0));
  ConstMapMat xm(x.data.data(), n, static_cast<Eigen::Index>(in_));
  ConstMapMat wm(weight_.data.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
  MapMat ym(output.data.data(), n, static_cast<Eigen::Index>(out_));
  ym.noalias() = xm * wm.transpose();
  if (has_bias_) {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (std::size_t o = 0; o < out_; ++o) ym(i, static_cast<Eigen::Index>(o)) += bias_.data[o];
    }
  }
}

void FullyConnected::Backward(std::span<const Tensor *const> inputs, const Tensor &,
                              const Tensor &grad_output, std::span<Tensor *const> grad_inputs,
                              const LayerCache &) {
  const Tensor &x = *inputs[0];
  const auto n = static_cast<Eigen::Index>(x.dim(0));
  ConstMapMat xm(x.data.data(), n, static_cast<Eigen::Index>(in_));
  ConstMapMat wm(weight_.data.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
  ConstMapMat dy(grad_output.data.data(), n, static_cast<Eigen::Index>(out_));
  MapMat dw(weight_.grad.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
  dw.noalias() += dy.transpose() * xm;
  if (has_bias_) {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (std::size_t o = 0; o < out_; ++o) bias_.grad[o] += dy(i, static_cast<Eigen::Index>(o));
    }
  }
  if (grad_inputs[0] != nullptr) {
    MapMat dx(grad_inputs[0]->data.data(), n, static_cast<Eigen::Index>(in_));
    dx.noalias() += dy * wm;
  }
}

// ---------------------------------------------------- softmax variants

Shape Softmax::OutputShape(std::span<const Shape> inputs) const {
  RequireRank(inputs[0], 2, "softmax");
  return inputs[0];
}

void Softmax::Forward(std::span<const Tensor *const> inputs, Tensor &output, ForwardContext &) {
  const Tensor &x = *inputs[0];
  const std::size_t n = x.dim(0), k = x.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    const double *row = x.data.data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      output.data[i * k + j] = std::exp(row[j] - mx);
      sum += output.data[i * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) output.data[i * k + j] /= sum;
  }
}

void Softmax::Backward(std::span<const Tensor *const>, const Tensor &output,
                       const Tensor &grad_output, std::span<Tensor *const> grad_inputs,
                       const LayerCache &) {
  if (grad_inputs[0] == nullptr) return;
  const std::size_t n = output.dim(0), k = output.dim(1);
  auto &dx = grad_inputs[0]->data;
  for (std::size_t i = 0; i < n; ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < k; ++j) dot += grad_output.data[i * k + j] * output.data[i * k + j];
    for (std::size_t j = 0; j < k; ++j) {
      dx[i * k + j] += output.data[i * k + j] * (grad_output.data[i * k + j] - dot);
    }
  }
}

Shape LogSoftmax::OutputShape(std::span<const Shape> inputs) const {
  RequireRank(inputs[0], 2, "log_softmax");
  return inputs[0];
}

void LogSoftmax::Forward(std::span<const Tensor *const> inputs, Tensor &output, ForwardContext &) {
  const Tensor &x = *inputs[0];
  const std::size_t n = x.dim(0), k = x.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    const double *row = x.data.data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t j = 0; j < k; ++j) output.data[i * k + j] = row[j] - lse;
  }
}

void LogSoftmax::Backward(std::span<const Tensor *const>, const Tensor &output,
                          const Tensor &grad_output, std::span<Tensor *const> grad_inputs,
                          const LayerCache &) {
  if (grad_inputs[0] == nullptr) return;
  const std::size_t n = output.dim(0), k = output.dim(1);
  auto &dx = grad_inputs[0]->data;
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += grad_output.data[i * k + j];
    for (std::size_t j = 0; j < k; ++j) {
      dx[i * k + j] += grad_output.data[i * k + j] - std::exp(output.data[i * k + j]) * sum;
    }
  }
}

// --------------------------------------------------------------- dropout

Dropout::Dropout(double p) : p_(p) {
  if (!(p >= 0.0 && p < 1.0)) Fail(ErrorKind::kParameter, "dropout probability must lie in [0, 1)");
}

void Dropout::Forward(std::span<const Tensor *const> inputs, Tensor &output, ForwardContext &ctx) {
  const auto &x = inputs[0]->data;
  if (ctx.mode == Mode::kEval || p_ == 0.0) {
    std::copy(x.begin(), x.end(), output.data.begin());
    if (ctx.cache) ctx.cache->values.assign(x.size(), 1.0);
    return;
  }
  if (ctx.rng == nullptr) Fail(ErrorKind::kState, "dropout in train mode needs an rng");
  auto &mask = ctx.cache->values;
  mask.resize(x.size());
  const double keep = 1.0 - p_;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask[i] = ctx.rng->Uniform() < keep ? 1.0 / keep : 0.0;
    output.data[i] = x[i] * mask[i];
  }
}

void Dropout::Backward(std::span<const Tensor *const>, const Tensor &, const Tensor &grad_output,
                       std::span<Tensor *const> grad_inputs, const LayerCache &cache) {
  if (grad_inputs[0] == nullptr) return;
  auto &dx = grad_inputs[0]->data;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += grad_output.data[i] * cache.values[i];
}

// ------------------------------------------------------ structural ops

Shape Concat::OutputShape(std::span<const Shape> inputs) const {
  Shape out = inputs[0];
  if (out.size() < 2) Fail(ErrorKind::kShape, "concat needs rank >= 2 inputs");
  out[1] = 0;
  for (const Shape &s : inputs) {
    if (s.size() != out.size()) Fail(ErrorKind::kShape, "concat inputs differ in rank");
    for (std::size_t a = 0; a < s.size(); ++a) {
      if (a != 1 && s[a] != inputs[0][a]) {
        Fail(ErrorKind::kShape, "concat inputs disagree off axis 1: " + ShapeString(inputs[0]) +
                                    " vs " + ShapeString(s));
      }
    }
    out[1] += s[1];
  }
  return out;
}

void Concat::Forward(std::span<const Tensor *const> inputs, Tensor &output, ForwardContext &) {
  const std::size_t n = output.dim(0);
  const std::size_t inner = output.size() / (n * output.dim(1));
  const std::size_t out_stride = output.dim(1) * inner;
  std::size_t offset = 0;
  for (const Tensor *t : inputs) {
    const std::size_t chunk = t->dim(1) * inner;
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(t->data.data() + i * chunk, chunk, output.data.data() + i * out_stride + offset);
    }
    offset += chunk;
  }
}

void Concat::Backward(std::span<const Tensor *const> inputs, const Tensor &,
                      const Tensor &grad_output, std::span<Tensor *const> grad_inputs,
                      const LayerCache &) {
  const std::size_t n = grad_output.dim(0);
  const std::size_t inner = grad_output.size() / (n * grad_output.dim(1));
  const std::size_t out_stride = grad_output.dim(1) * inner;
  std::size_t offset = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const std::size_t chunk = inputs[k]->dim(1) * inner;
    if (grad_inputs[k] != nullptr) {
      for (std::size_t i = 0; i < n; ++i) {
        const double *src = grad_output.data.data() + i * out_stride + offset;
        double *dst = grad_inputs[k]->data.data() + i * chunk;
        for (std::size_t j = 0; j < chunk; ++j) dst[j] += src[j];
      }
    }
    offset += chunk;
  }
}

Shape Add::OutputShape(std::span<const Shape> inputs) const {
  if (inputs[0] != inputs[1]) {
    Fail(ErrorKind::kShape, "add operands differ: " + ShapeString(inputs[0]) + " vs " +
                                ShapeString(inputs[1]));
  }
  return inputs[0];
}

void Add::Forward(std::span<const Tensor *const> inputs, Tensor &output, ForwardContext &) {
  const auto &a = inputs[0]->data;
  const auto &b = inputs[1]->data;
  for (std::size_t i = 0; i < a.size(); ++i) output.data[i] = a[i] + b[i];
}

void Add::Backward(std::span<const Tensor *const>, const Tensor &, const Tensor &grad_output,
                   std::span<Tensor *const> grad_inputs, const LayerCache &) {
  for (Tensor *g : grad_inputs) {
    if (g == nullptr) continue;
    for (std::size_t i = 0; i < g->size(); ++i) g->data[i] += grad_output.data[i];
  }
}

Shape Reshape::OutputShape(std::span<const Shape> inputs) const {
  const Shape &in = inputs[0];
  Shape out{in[0]};
  out.insert(out.end(), target_.begin(), target_.end());
  if (NumElements(out) != NumElements(in)) {
    Fail(ErrorKind::kShape, "cannot reshape " + ShapeString(in) + " to per-sample " +
                                ShapeString(target_));
  }
  return out;
}

void Reshape::Forward(std::span<const Tensor *const> inputs, Tensor &output, ForwardContext &) {
  std::copy(inputs[0]->data.begin(), inputs[0]->data.end(), output.data.begin());
}

void Reshape::Backward(std::span<const Tensor *const>, const Tensor &, const Tensor &grad_output,
                       std::span<Tensor *const> grad_inputs, const LayerCache &) {
  if (grad_inputs[0] == nullptr) return;
  auto &dx = grad_inputs[0]->data;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += grad_output.data[i];
}

Shape ChannelScale::OutputShape(std::span<const Shape> inputs) const {
  const Shape &x = inputs[0];
  const Shape &g = inputs[1];
  RequireRank(x, 4, "channel_scale");
  if (g.size() != 2 || g[0] != x[0] || g[1] != x[1]) {
    Fail(ErrorKind::kShape, "channel_scale gate " + ShapeString(g) + " does not match " +
                                ShapeString(x));
  }
  return x;
}

void ChannelScale::Forward(std::span<const Tensor *const> inputs, Tensor &output,
                           ForwardContext &) {
  const Tensor &x = *inputs[0];
  const Tensor &g = *inputs[1];
  const std::size_t planes = x.dim(0) * x.dim(1), s = x.dim(2) * x.dim(3);
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const double gate = g.data[pl];
    for (std::size_t j = 0; j < s; ++j) output.data[pl * s + j] = x.data[pl * s + j] * gate;
  }
}

void ChannelScale::Backward(std::span<const Tensor *const> inputs, const Tensor &,
                            const Tensor &grad_output, std::span<Tensor *const> grad_inputs,
                            const LayerCache &) {
  const Tensor &x = *inputs[0];
  const Tensor &g = *inputs[1];
  const std::size_t planes = x.dim(0) * x.dim(1), s = x.dim(2) * x.dim(3);
  for (std::size_t pl = 0; pl < planes; ++pl) {
    double dg = 0.0;
    for (std::size_t j = 0; j < s; ++j) {
      const double dy = grad_output.data[pl * s + j];
      if (grad_inputs[0] != nullptr) grad_inputs[0]->data[pl * s + j] += dy * g.data[pl];
      dg += dy * x.data[pl * s + j];
    }
    if (grad_inputs[1] != nullptr) grad_inputs[1]->data[pl] += dg;
  }
}

Shape SliceChannels::OutputShape(std::span<const Shape> inputs) const {
  const Shape &in = inputs[0];
  RequireRank(in, 4, "slice_channels");
  if (count_ == 0 || begin_ + count_ > in[1]) {
    Fail(ErrorKind::kShape, "channel slice [" + std::to_string(begin_) + ", " +
                                std::to_string(begin_ + count_) + ") out of range for " +
                                ShapeString(in));
  }
  return {in[0], count_, in[2], in[3]};
}

void SliceChannels::Forward(std::span<const Tensor *const> inputs, Tensor &output,
                            ForwardContext &) {
  const Tensor &x = *inputs[0];
  const std::size_t s = x.dim(2) * x.dim(3);
  for (std::size_t i = 0; i < x.dim(0); ++i) {
    std::copy_n(x.data.data() + (i * x.dim(1) + begin_) * s, count_ * s,
                output.data.data() + i * count_ * s);
  }
}

void SliceChannels::Backward(std::span<const Tensor *const> inputs, const Tensor &,
                             const Tensor &grad_output, std::span<Tensor *const> grad_inputs,
                             const LayerCache &) {
  if (grad_inputs[0] == nullptr) return;
  const Tensor &x = *inputs[0];
  const std::size_t s = x.dim(2) * x.dim(3);
  for (std::size_t i = 0; i < x.dim(0); ++i) {
    const double *src = grad_output.data.data() + i * count_ * s;
    double *dst = grad_inputs[0]->data.data() + (i * x.dim(1) + begin_) * s;
    for (std::size_t j = 0; j < count_ * s; ++j) dst[j] += src[j];
  }
}

}  // namespace fusioncm::nn
