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

#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fusioncm/rng.hpp"
#include "fusioncm/tensor.hpp"

namespace fusioncm::nn {

enum class Mode { kTrain, kEval };

enum class LayerKind {
  kConv2d,
  kBatchNorm,
  kRelu,
  kLeakyRelu,
  kSigmoid,
  kMaxPool,
  kAvgPool,
  kGlobalAvgPoolTime,
  kGlobalAvgPool,
  kFullyConnected,
  kSoftmax,
  kLogSoftmax,
  kDropout,
  kConcat,
  kAdd,
  kReshape,
  kChannelScale,
  kSliceChannels,
};

std::string LayerKindName(LayerKind kind);

// Per-node scratch kept between forward and backward.
struct LayerCache {
  std::vector<double> values;
  std::vector<std::size_t> indices;
};

struct ForwardContext {
  Mode mode = Mode::kEval;
  Rng *rng = nullptr;  // dropout masks; required in train mode
  LayerCache *cache = nullptr;
};

struct NamedTensor {
  std::string name;
  Tensor *tensor;
  bool trainable;
};

// Shapes seen by layers always include the leading batch dimension.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;
  virtual std::size_t num_inputs() const { return 1; }
  virtual Shape OutputShape(std::span<const Shape> inputs) const = 0;

  // Eval-mode forward never mutates the layer.
  virtual void Forward(std::span<const Tensor *const> inputs, Tensor &output,
                       ForwardContext &ctx) = 0;

  // Accumulates into grad_inputs[i] (already sized) and parameter grads.
  // grad_inputs[i] may be null when that input needs no gradient.
  virtual void Backward(std::span<const Tensor *const> inputs, const Tensor &output,
                        const Tensor &grad_output, std::span<Tensor *const> grad_inputs,
                        const LayerCache &cache) = 0;

  virtual void InitParameters(Rng & /*rng*/) {}
  virtual bool initialized() const { return true; }
  // Trainable tensors and buffers with local names ("weight", "running_mean").
  virtual std::vector<NamedTensor> State() { return {}; }
};

struct Conv2dOptions {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 3, kernel_w = 3;
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t pad_top = 0, pad_bottom = 0, pad_left = 0, pad_right = 0;
  bool bias = true;

  // Symmetric padding p on every side.
  Conv2dOptions &Padding(std::size_t p) {
    pad_top = pad_bottom = pad_left = pad_right = p;
    return *this;
  }
};

class Conv2d final : public Layer {
 public:
  explicit Conv2d(const Conv2dOptions &opts);
  LayerKind kind() const override { return LayerKind::kConv2d; }
  Shape OutputShape(std::span<const Shape> inputs) const override;
  void Forward(std::span<const Tensor *const> inputs, Tensor &output, ForwardContext &ctx) override;
  void Backward(std::span<const Tensor *const> inputs, const Tensor &output,
                const Tensor &grad_output, std::span<Tensor *const> grad_inputs,
                const LayerCache &cache) override;
  void InitParameters(Rng &rng) override;
  bool initialized() const override { return !weight_.data.empty(); }
  std::vector<NamedTensor> State() override;

  const Conv2dOptions &options() const { return opts_; }
  Tensor &weight() { return weight_; }
  Tensor &bias() { return bias_; }

 private:
  bool IsPointwise() const;
  void Im2Col(const double *image, std::size_t h, std::size_t w, std::size_t oh, std::size_t ow,
              double *cols) const;
  void Col2Im(const double *cols, std::size_t h, std::size_t w, std::size_t oh, std::size_t ow,
              double *image) const;

  Conv2dOptions opts_;
  Tensor weight_;  // out x in x kh x kw
  Tensor bias_;    // out
};

// Per-channel normalisation for N x C x H x W or N x C inputs.
class BatchNorm final : public Layer {
 public:
  explicit BatchNorm(std::size_t channels, bool affine = true, double momentum = 0.1,
                     double epsilon = 1e-5);
  LayerKind kind() const override { return LayerKind::kBatchNorm; }
  Shape OutputShape(std::span<const Shape> inputs) const override;
  void Forward(std::span<const Tensor *const> inputs, Tensor &output, ForwardContext &ctx) override;
  void Backward(std::span<const Tensor *const> inputs, const Tensor &output,
                const Tensor &grad_output, std::span<Tensor *const> grad_inputs,
                const LayerCache &cache) override;
  void InitParameters(Rng &rng) override;
  bool initialized() const override { return !running_mean_.data.empty(); }
  std::vector<NamedTensor> State() override;

  Tensor &gamma() { return gamma_; }
  Tensor &beta() { return beta_; }
  Tensor &running_mean() { return running_mean_; }
  Tensor &running_var() { return running_var_; }
  double epsilon() const { return epsilon_; }

 private:
  std::size_t channels_;
  bool affine_;
  double momentum_;
  double epsilon_;
  Tensor gamma_, beta_, running_mean_, running_var_;
};

class Relu final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::kRelu; }
  Shape OutputShape(std::span<const Shape> inputs) const override { return inputs[0]; }
  void Forward(std::span<const Tensor *const> inputs, Tensor &output, ForwardContext &ctx) override;
  void Backward(std::span<const Tensor *const> inputs, const Tensor &output,
                const Tensor &grad_output, std::span<Tensor *const> grad_inputs,
                const LayerCache &cache) override;
};

class LeakyRelu final : public Layer {
 public:
  explicit LeakyRelu(double slope = 0.01) : slope_(slope) {}
  LayerKind kind() const override { return LayerKind::kLeakyRelu; }
  Shape OutputShape(std::span<const Shape> inputs) const override { return inputs[0]; }
  void Forward(std::span<const Tensor *const> inputs, Tensor &output, ForwardContext &ctx) override;
  void Backward(std::span<const Tensor *const> inputs, const Tensor &output,
                const Tensor &grad_output, std::span<Tensor *const> grad_inputs,
                const LayerCache &cache) override;

 private:
  double slope_;
};

class Sigmoid final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::kSigmoid; }
  Shape OutputShape(std::span<const Shape> inputs) const override { return inputs[0]; }
  void Forward(std::span<const Tensor *const> inputs, Tensor &output, ForwardContext &ctx) override;
  void Backward(std::span<const Tensor *const> inputs, const Tensor &output,
                const Tensor &grad_output, std::span<Tensor *const> grad_inputs,
                const LayerCache &cache) override;
};

struct PoolOptions {
  std::size_t kernel_h = 2, kernel_w = 2;
  std::size_t stride_h = 2, stride_w = 2;
};

// Output extent floor((in - k) / s) + 1, no padding.
class MaxPool final : public Layer {
 public:
  explicit MaxPool(const PoolOptions &opts) : opts_(opts) {}
  LayerKind kind() const override { return LayerKind::kMaxPool; }
  Shape OutputShape(std::span<const Shape> inputs) const override;
  void Forward(std::span<const Tensor *const> inputs, Tensor &output, ForwardContext &ctx) override;
  void Backward(std::span<const Tensor *const> inputs, const Tensor &output,
                const Tensor &grad_output, std::span<Tensor *const> grad_inputs,
                const LayerCache &cache) override;

 private:
  PoolOptions opts_;
};

class AvgPool final : public Layer {
 public:
  explicit AvgPool(const PoolOptions &opts) : opts_(opts) {}
  LayerKind kind() const override { return LayerKind::kAvgPool; }
  Shape OutputShape(std::span<const Shape> inputs) const override;
  void Forward(std::span<const Tensor *const> inputs, Tensor &output, ForwardContext &ctx) override;
  void Backward(std::span<const Tensor *const> inputs, const Tensor &output,
                const Tensor &grad_output, std::span<Tensor *const> grad_inputs,
                const LayerCache &cache) override;

 private:
  PoolOptions opts_;
};

// Mean over the time (H) axis: N x C x H x W -> N x C x 1 x W.
class GlobalAvgPoolTime final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::kGlobalAvgPoolTime; }
  Shape OutputShape(std::span<const Shape> inputs) const override;
  void Forward(std::span<const Tensor *const> inputs, Tensor &output, ForwardContext &ctx) override;
  void Backward(std::span<const Tensor *const> inputs, const Tensor &output,
                const Tensor &grad_output, std::span<Tensor *const> grad_inputs,
                const LayerCache &cache) override;
};

// N x C x H x W -> N x C.
class GlobalAvgPool final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::kGlobalAvgPool; }
  Shape OutputShape(std::span<const Shape> inputs) const override;
  void Forward(std::span<const Tensor *const> inputs, Tensor &output, ForwardContext &ctx) override;
  void Backward(std::span<const Tensor *const> inputs, const Tensor &output,
                const Tensor &grad_output, std::span<Tensor *const> grad_inputs,
                const LayerCache &cache) override;
};

// Flattens all non-batch axes of its input, then y = x W^T + b.
class FullyConnected final : public Layer {
 public:
  FullyConnected(std::size_t in_features, std::size_t out_features, bool bias = true);
  LayerKind kind() const override { return LayerKind::kFullyConnected; }
  Shape OutputShape(std::span<const Shape> inputs) const override;
  void Forward(std::span<const Tensor *const> inputs, Tensor &output, ForwardContext &ctx) override;
  void Backward(std::span<const Tensor *const> inputs, const Tensor &output,
                const Tensor &grad_output, std::span<Tensor *const> grad_inputs,
                const LayerCache &cache) override;
  void InitParameters(Rng &rng) override;
  bool initialized() const override { return !weight_.data.empty(); }
  std::vector<NamedTensor> State() override;

  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }
  Tensor &weight() { return weight_; }
  Tensor &bias() { return bias_; }

 private:
  std::size_t in_, out_;
  bool has_bias_;
  Tensor weight_;  // out x in
  Tensor bias_;
};

// Over the last axis of an N x K input, max-subtracted.
class Softmax final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::kSoftmax; }
  Shape OutputShape(std::span<const Shape> inputs) const override;
  void Forward(std::span<const Tensor *const> inputs, Tensor &output, ForwardContext &ctx) override;
  void Backward(std::span<const Tensor *const> inputs, const Tensor &output,
                const Tensor &grad_output, std::span<Tensor *const> grad_inputs,
                const LayerCache &cache) override;
};

class LogSoftmax final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::kLogSoftmax; }
  Shape OutputShape(std::span<const Shape> inputs) const override;
  void Forward(std::span<const Tensor *const> inputs, Tensor &output, ForwardContext &ctx) override;
  void Backward(std::span<const Tensor *const> inputs, const Tensor &output,
                const Tensor &grad_output, std::span<Tensor *const> grad_inputs,
                const LayerCache &cache) override;
};

// Inverted dropout: active only in train mode.
class Dropout final : public Layer {
 public:
  explicit Dropout(double p);
  LayerKind kind() const override { return LayerKind::kDropout; }
  Shape OutputShape(std::span<const Shape> inputs) const override { return inputs[0]; }
  void Forward(std::span<const Tensor *const> inputs, Tensor &output, ForwardContext &ctx) override;
  void Backward(std::span<const Tensor *const> inputs, const Tensor &output,
                const Tensor &grad_output, std::span<Tensor *const> grad_inputs,
                const LayerCache &cache) override;

 private:
  double p_;
};

// Concatenation along axis 1 (channels or features).
class Concat final : public Layer {
 public:
  explicit Concat(std::size_t n_inputs) : n_(n_inputs) {}
  LayerKind kind() const override { return LayerKind::kConcat; }
  std::size_t num_inputs() const override { return n_; }
  Shape OutputShape(std::span<const Shape> inputs) const override;
  void Forward(std::span<const Tensor *const> inputs, Tensor &output, ForwardContext &ctx) override;
  void Backward(std::span<const Tensor *const> inputs, const Tensor &output,
                const Tensor &grad_output, std::span<Tensor *const> grad_inputs,
                const LayerCache &cache) override;

 private:
  std::size_t n_;
};

class Add final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::kAdd; }
  std::size_t num_inputs() const override { return 2; }
  Shape OutputShape(std::span<const Shape> inputs) const override;
  void Forward(std::span<const Tensor *const> inputs, Tensor &output, ForwardContext &ctx) override;
  void Backward(std::span<const Tensor *const> inputs, const Tensor &output,
                const Tensor &grad_output, std::span<Tensor *const> grad_inputs,
                const LayerCache &cache) override;
};

// Reinterprets the per-sample payload with a new shape (row-major).
class Reshape final : public Layer {
 public:
  explicit Reshape(Shape sample_shape) : target_(std::move(sample_shape)) {}
  LayerKind kind() const override { return LayerKind::kReshape; }
  Shape OutputShape(std::span<const Shape> inputs) const override;
  void Forward(std::span<const Tensor *const> inputs, Tensor &output, ForwardContext &ctx) override;
  void Backward(std::span<const Tensor *const> inputs, const Tensor &output,
                const Tensor &grad_output, std::span<Tensor *const> grad_inputs,
                const LayerCache &cache) override;

 private:
  Shape target_;
};

// x (N x C x H x W) times a per-channel gate g (N x C).
class ChannelScale final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::kChannelScale; }
  std::size_t num_inputs() const override { return 2; }
  Shape OutputShape(std::span<const Shape> inputs) const override;
  void Forward(std::span<const Tensor *const> inputs, Tensor &output, ForwardContext &ctx) override;
  void Backward(std::span<const Tensor *const> inputs, const Tensor &output,
                const Tensor &grad_output, std::span<Tensor *const> grad_inputs,
                const LayerCache &cache) override;
};

// Channels [begin, begin + count) of an N x C x H x W input.
class SliceChannels final : public Layer {
 public:
  SliceChannels(std::size_t begin, std::size_t count) : begin_(begin), count_(count) {}
  LayerKind kind() const override { return LayerKind::kSliceChannels; }
  Shape OutputShape(std::span<const Shape> inputs) const override;
  void Forward(std::span<const Tensor *const> inputs, Tensor &output, ForwardContext &ctx) override;
  void Backward(std::span<const Tensor *const> inputs, const Tensor &output,
                const Tensor &grad_output, std::span<Tensor *const> grad_inputs,
                const LayerCache &cache) override;

 private:
  std::size_t begin_, count_;
};

}  // namespace fusioncm::nn
