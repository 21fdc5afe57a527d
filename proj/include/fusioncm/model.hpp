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

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "fusioncm/layers.hpp"

namespace fusioncm::nn {

using NodeId = std::size_t;

// Sample shape dims equal to kAnyExtent accept any positive size at run time.
inline constexpr std::size_t kAnyExtent = 0;

class Model;

// Activations and per-layer caches from one forward pass.
struct Trace {
  const Model *model = nullptr;
  Mode mode = Mode::kEval;
  std::vector<Tensor> activations;
  std::vector<LayerCache> caches;

  const Tensor &at(NodeId id) const { return activations.at(id); }
};

// A directed acyclic graph of layers. Nodes are appended in topological
// order: every node's inputs must already exist. Node 0 is the input.
class Model {
 public:
  // `sample_shape` excludes the batch axis. `min_shape` gives a concrete
  // value for every kAnyExtent dim; it is used for build-time shape inference
  // and is also the smallest extent accepted at run time.
  explicit Model(Shape sample_shape, Shape min_shape = {});

  Model(Model &&) = default;
  Model &operator=(Model &&) = default;

  NodeId input() const { return 0; }
  NodeId Append(std::unique_ptr<Layer> layer, std::vector<NodeId> inputs, std::string name);

  // Builder shorthands.
  NodeId Conv(NodeId x, const Conv2dOptions &opts, std::string name);
  NodeId BatchNorm(NodeId x, std::string name);
  NodeId Relu(NodeId x, std::string name);
  NodeId LeakyRelu(NodeId x, std::string name, double slope = 0.01);
  NodeId Sigmoid(NodeId x, std::string name);
  NodeId MaxPool(NodeId x, const PoolOptions &opts, std::string name);
  NodeId AvgPool(NodeId x, const PoolOptions &opts, std::string name);
  NodeId GlobalAvgPoolTime(NodeId x, std::string name);
  NodeId GlobalAvgPool(NodeId x, std::string name);
  NodeId Dense(NodeId x, std::size_t out_features, std::string name);
  NodeId Softmax(NodeId x, std::string name);
  NodeId LogSoftmax(NodeId x, std::string name);
  NodeId Dropout(NodeId x, double p, std::string name);
  NodeId Concat(std::vector<NodeId> xs, std::string name);
  NodeId Add(NodeId a, NodeId b, std::string name);
  NodeId Reshape(NodeId x, Shape sample_shape, std::string name);
  NodeId ChannelScale(NodeId x, NodeId gate, std::string name);
  NodeId SliceChannels(NodeId x, std::size_t begin, std::size_t count, std::string name);

  // Build-time per-sample shape (batch axis stripped).
  Shape SampleShape(NodeId id) const;
  std::size_t Channels(NodeId id) const { return SampleShape(id).at(0); }

  void MarkOutput(const std::string &name, NodeId id);
  NodeId Output(const std::string &name) const;
  bool HasOutput(const std::string &name) const;
  const std::map<std::string, NodeId> &outputs() const { return outputs_; }

  std::size_t num_nodes() const { return nodes_.size(); }
  const std::string &node_name(NodeId id) const { return nodes_.at(id).name; }
  const std::vector<NodeId> &node_inputs(NodeId id) const { return nodes_.at(id).inputs; }
  Layer *layer(NodeId id) const { return nodes_.at(id).layer.get(); }
  NodeId Find(const std::string &name) const;
  std::size_t CountLayers(LayerKind kind) const;

  const Shape &sample_shape() const { return sample_shape_; }
  const Shape &min_shape() const { return min_shape_; }

  // Allocates and initialises every parameter from `seed`.
  void Initialize(std::uint64_t seed);
  bool initialized() const { return initialized_; }
  // Resets the stream that drives dropout masks.
  void ReseedRng(std::uint64_t seed) { rng_ = Rng(seed); }

  // Train mode may update batchnorm running statistics and draws dropout masks.
  Trace Forward(const Tensor &input, Mode mode);
  // Eval-mode forward that leaves the model untouched.
  Tensor Infer(const Tensor &input, NodeId node) const;
  Tensor Infer(const Tensor &input) const { return Infer(input, nodes_.size() - 1); }
  // Eval-mode forward keeping every activation.
  Trace InferAll(const Tensor &input) const;

  // Propagates `grad` (shaped like the node's activation) back through the
  // graph and accumulates into parameter gradients.
  void Backward(const Trace &trace, NodeId node, const Tensor &grad);
  void ZeroGrad();

  std::vector<Tensor *> Parameters();
  std::vector<std::pair<std::string, Tensor *>> NamedState();
  std::size_t NumParameters() const;

  std::string Summary() const;

 private:
  struct Node {
    std::string name;
    std::unique_ptr<Layer> layer;  // null for the input node
    std::vector<NodeId> inputs;
    Shape shape;  // build-time, with batch axis of 1
  };

  Trace Run(const Tensor &input, Mode mode, NodeId last, Rng *rng) const;
  void CheckInput(const Tensor &input) const;

  Shape sample_shape_;
  Shape min_shape_;
  std::vector<Node> nodes_;
  std::map<std::string, NodeId> outputs_;
  std::map<std::string, NodeId> by_name_;
  bool initialized_ = false;
  Rng rng_{0};
};

// Checkpoint layout (little-endian): "FCMCKPT1", u32 version, u32 count, then
// per tensor: u32 name length, name bytes, u32 rank, u64 dims[rank], f64 data.
void WriteCheckpoint(std::ostream &out, Model &model);
void ReadCheckpoint(std::istream &in, Model &model);
void SaveCheckpoint(const std::filesystem::path &path, Model &model);
void LoadCheckpoint(const std::filesystem::path &path, Model &model);

}  // namespace fusioncm::nn
