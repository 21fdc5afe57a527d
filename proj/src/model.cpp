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

#include "fusioncm/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fusioncm/errors.hpp"

namespace fusioncm::nn {

std::size_t NumElements(const Shape &shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string ShapeString(const Shape &shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += shape[i] == kAnyExtent ? std::string("*") : std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  if (data.size() != NumElements(shape)) {
    Fail(ErrorKind::kShape, "tensor payload of " + std::to_string(data.size()) +
                                " values does not match shape " + ShapeString(shape));
  }
}

bool Tensor::AllFinite() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

Model::Model(Shape sample_shape, Shape nominal_shape) : sample_shape_(std::move(sample_shape)) {
  if (nominal_shape.empty()) nominal_shape = sample_shape_;
  min_shape_ = nominal_shape;
  if (nominal_shape.size() != sample_shape_.size()) {
    Fail(ErrorKind::kShape, "nominal shape rank differs from sample shape");
  }
  for (std::size_t i = 0; i < nominal_shape.size(); ++i) {
    if (sample_shape_[i] != kAnyExtent && nominal_shape[i] != sample_shape_[i]) {
      Fail(ErrorKind::kShape, "nominal shape conflicts with fixed sample dims");
    }
    if (nominal_shape[i] == kAnyExtent) {
      Fail(ErrorKind::kShape, "nominal shape needs a concrete value for every dim");
    }
  }
  Node in;
  in.name = "input";
  in.shape = {1};
  in.shape.insert(in.shape.end(), nominal_shape.begin(), nominal_shape.end());
  by_name_["input"] = 0;
  nodes_.push_back(std::move(in));
}

NodeId Model::Append(std::unique_ptr<Layer> layer, std::vector<NodeId> inputs, std::string name) {
  if (initialized_) Fail(ErrorKind::kState, "cannot add layers after Initialize()");
  if (inputs.size() != layer->num_inputs()) {
    Fail(ErrorKind::kShape, "layer '" + name + "' expects " + std::to_string(layer->num_inputs()) +
                                " inputs, got " + std::to_string(inputs.size()));
  }
  if (by_name_.count(name)) Fail(ErrorKind::kParameter, "duplicate layer name '" + name + "'");
  std::vector<Shape> in_shapes;
  for (NodeId id : inputs) {
    if (id >= nodes_.size()) Fail(ErrorKind::kShape, "layer '" + name + "' references unknown node");
    in_shapes.push_back(nodes_[id].shape);
  }
  Node node;
  try {
    node.shape = layer->OutputShape(in_shapes);
  } catch (const Error &e) {
    throw Error(e.kind(), "layer '" + name + "': " + e.what());
  }
  node.name = name;
  node.layer = std::move(layer);
  node.inputs = std::move(inputs);
  const NodeId id = nodes_.size();
  by_name_[node.name] = id;
  nodes_.push_back(std::move(node));
  return id;
}

NodeId Model::Conv(NodeId x, const Conv2dOptions &opts, std::string name) {
  return Append(std::make_unique<Conv2d>(opts), {x}, std::move(name));
}
NodeId Model::BatchNorm(NodeId x, std::string name) {
  return Append(std::make_unique<nn::BatchNorm>(Channels(x)), {x}, std::move(name));
}
NodeId Model::Relu(NodeId x, std::string name) {
  return Append(std::make_unique<nn::Relu>(), {x}, std::move(name));
}
NodeId Model::LeakyRelu(NodeId x, std::string name, double slope) {
  return Append(std::make_unique<nn::LeakyRelu>(slope), {x}, std::move(name));
}
NodeId Model::Sigmoid(NodeId x, std::string name) {
  return Append(std::make_unique<nn::Sigmoid>(), {x}, std::move(name));
}
NodeId Model::MaxPool(NodeId x, const PoolOptions &opts, std::string name) {
  return Append(std::make_unique<nn::MaxPool>(opts), {x}, std::move(name));
}
NodeId Model::AvgPool(NodeId x, const PoolOptions &opts, std::string name) {
  return Append(std::make_unique<nn::AvgPool>(opts), {x}, std::move(name));
}
NodeId Model::GlobalAvgPoolTime(NodeId x, std::string name) {
  return Append(std::make_unique<nn::GlobalAvgPoolTime>(), {x}, std::move(name));
}
NodeId Model::GlobalAvgPool(NodeId x, std::string name) {
  return Append(std::make_unique<nn::GlobalAvgPool>(), {x}, std::move(name));
}
NodeId Model::Dense(NodeId x, std::size_t out_features, std::string name) {
  return Append(std::make_unique<FullyConnected>(NumElements(SampleShape(x)), out_features), {x},
                std::move(name));
}
NodeId Model::Softmax(NodeId x, std::string name) {
  return Append(std::make_unique<nn::Softmax>(), {x}, std::move(name));
}
NodeId Model::LogSoftmax(NodeId x, std::string name) {
  return Append(std::make_unique<nn::LogSoftmax>(), {x}, std::move(name));
}
NodeId Model::Dropout(NodeId x, double p, std::string name) {
  return Append(std::make_unique<nn::Dropout>(p), {x}, std::move(name));
}
NodeId Model::Concat(std::vector<NodeId> xs, std::string name) {
  const std::size_t n = xs.size();
  return Append(std::make_unique<nn::Concat>(n), std::move(xs), std::move(name));
}
NodeId Model::Add(NodeId a, NodeId b, std::string name) {
  return Append(std::make_unique<nn::Add>(), {a, b}, std::move(name));
}
NodeId Model::Reshape(NodeId x, Shape sample_shape, std::string name) {
  return Append(std::make_unique<nn::Reshape>(std::move(sample_shape)), {x}, std::move(name));
}
NodeId Model::ChannelScale(NodeId x, NodeId gate, std::string name) {
  return Append(std::make_unique<nn::ChannelScale>(), {x, gate}, std::move(name));
}
NodeId Model::SliceChannels(NodeId x, std::size_t begin, std::size_t count, std::string name) {
  return Append(std::make_unique<nn::SliceChannels>(begin, count), {x}, std::move(name));
}

Shape Model::SampleShape(NodeId id) const {
  const Shape &s = nodes_.at(id).shape;
  return Shape(s.begin() + 1, s.end());
}

void Model::MarkOutput(const std::string &name, NodeId id) {
  if (id >= nodes_.size()) Fail(ErrorKind::kParameter, "output '" + name + "' names unknown node");
  outputs_[name] = id;
}

NodeId Model::Output(const std::string &name) const {
  auto it = outputs_.find(name);
  if (it == outputs_.end()) Fail(ErrorKind::kParameter, "model has no output named '" + name + "'");
  return it->second;
}

bool Model::HasOutput(const std::string &name) const { return outputs_.count(name) != 0; }

NodeId Model::Find(const std::string &name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) Fail(ErrorKind::kParameter, "model has no layer named '" + name + "'");
  return it->second;
}

std::size_t Model::CountLayers(LayerKind kind) const {
  return static_cast<std::size_t>(std::count_if(nodes_.begin() + 1, nodes_.end(), [&](const Node &n) {
    return n.layer->kind() == kind;
  }));
}

void Model::Initialize(std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t i = 1; i < nodes_.size(); ++i) nodes_[i].layer->InitParameters(rng);
  rng_ = Rng(seed ^ 0x9e3779b97f4a7c15ULL);
  initialized_ = true;
}

void Model::CheckInput(const Tensor &input) const {
  if (!initialized_) Fail(ErrorKind::kState, "model parameters are not initialised");
  const Shape &in = input.shape;
  bool ok = in.size() == sample_shape_.size() + 1 && in[0] > 0;
  for (std::size_t i = 0; ok && i < sample_shape_.size(); ++i) {
    ok = sample_shape_[i] == kAnyExtent ? in[i + 1] >= min_shape_[i]
                                        : in[i + 1] == sample_shape_[i];
  }
  if (!ok) {
    Fail(ErrorKind::kShape, "input " + ShapeString(in) + " does not match model input [N]" +
                                ShapeString(sample_shape_) + " (minimum " + ShapeString(min_shape_) + ")");
  }
}

Trace Model::Run(const Tensor &input, Mode mode, NodeId last, Rng *rng) const {
  CheckInput(input);
  Trace trace;
  trace.model = this;
  trace.mode = mode;
  trace.activations.resize(last + 1);
  trace.caches.resize(last + 1);
  trace.activations[0] = Tensor(input.shape, input.data);
  for (NodeId id = 1; id <= last; ++id) {
    const Node &node = nodes_[id];
    std::vector<const Tensor *> ins;
    std::vector<Shape> shapes;
    for (NodeId src : node.inputs) {
      ins.push_back(&trace.activations[src]);
      shapes.push_back(trace.activations[src].shape);
    }
    Tensor &out = trace.activations[id];
    try {
      out = Tensor(node.layer->OutputShape(shapes));
      ForwardContext ctx{mode, rng, &trace.caches[id]};
      node.layer->Forward(ins, out, ctx);
    } catch (const Error &e) {
      throw Error(e.kind(), "layer '" + node.name + "': " + e.what());
    }
  }
  return trace;
}

Trace Model::Forward(const Tensor &input, Mode mode) {
  return Run(input, mode, nodes_.size() - 1, mode == Mode::kTrain ? &rng_ : nullptr);
}

Tensor Model::Infer(const Tensor &input, NodeId node) const {
  if (node >= nodes_.size()) Fail(ErrorKind::kParameter, "unknown node");
  Trace t = Run(input, Mode::kEval, node, nullptr);
  return std::move(t.activations[node]);
}

Trace Model::InferAll(const Tensor &input) const {
  return Run(input, Mode::kEval, nodes_.size() - 1, nullptr);
}

void Model::Backward(const Trace &trace, NodeId node, const Tensor &grad) {
  if (trace.model != this || trace.activations.empty()) {
    Fail(ErrorKind::kState, "backward called without a forward pass on this model");
  }
  if (trace.mode != Mode::kTrain) {
    Fail(ErrorKind::kState, "backward requires a train-mode forward pass");
  }
  if (node >= trace.activations.size()) Fail(ErrorKind::kState, "node was not evaluated");
  if (grad.shape != trace.activations[node].shape) {
    Fail(ErrorKind::kShape, "loss gradient " + ShapeString(grad.shape) + " does not match output " +
                                ShapeString(trace.activations[node].shape));
  }
  std::vector<Tensor> grads(node + 1);
  grads[node] = Tensor(grad.shape, grad.data);
  for (NodeId id = node; id >= 1; --id) {
    if (grads[id].data.empty()) continue;
    const Node &n = nodes_[id];
    std::vector<const Tensor *> ins;
    std::vector<Tensor *> gins;
    for (NodeId src : n.inputs) {
      ins.push_back(&trace.activations[src]);
      if (src == 0) {
        gins.push_back(nullptr);
        continue;
      }
      if (grads[src].data.empty()) grads[src] = Tensor(trace.activations[src].shape);
      gins.push_back(&grads[src]);
    }
    n.layer->Backward(ins, trace.activations[id], grads[id], gins, trace.caches[id]);
    grads[id] = Tensor();  // release early
  }
}

void Model::ZeroGrad() {
  for (Tensor *p : Parameters()) p->ZeroGrad();
}

std::vector<Tensor *> Model::Parameters() {
  std::vector<Tensor *> out;
  for (std::size_t i = 1; i < nodes_.size(); ++i) {
    for (const NamedTensor &t : nodes_[i].layer->State()) {
      if (t.trainable) out.push_back(t.tensor);
    }
  }
  return out;
}

std::vector<std::pair<std::string, Tensor *>> Model::NamedState() {
  std::vector<std::pair<std::string, Tensor *>> out;
  for (std::size_t i = 1; i < nodes_.size(); ++i) {
    for (const NamedTensor &t : nodes_[i].layer->State()) {
      out.emplace_back(nodes_[i].name + "." + t.name, t.tensor);
    }
  }
  return out;
}

std::size_t Model::NumParameters() const {
  // Counted from layer hyper-parameters so it works before Initialize().
  std::size_t total = 0;
  for (std::size_t i = 1; i < nodes_.size(); ++i) {
    const Layer *l = nodes_[i].layer.get();
    if (auto *c = dynamic_cast<const Conv2d *>(l)) {
      const auto &o = c->options();
      total += o.out_channels * o.in_channels * o.kernel_h * o.kernel_w + (o.bias ? o.out_channels : 0);
    } else if (auto *f = dynamic_cast<const FullyConnected *>(l)) {
      total += f->in_features() * f->out_features() + f->out_features();
    } else if (l->kind() == LayerKind::kBatchNorm) {
      total += 2 * nodes_[i].shape[1];
    }
  }
  return total;
}

std::string Model::Summary() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node &n = nodes_[i];
    os << i << ' ' << n.name << ' ' << (n.layer ? LayerKindName(n.layer->kind()) : "input") << ' '
       << ShapeString(SampleShape(i));
    if (!n.inputs.empty()) {
      os << " <-";
      for (NodeId src : n.inputs) os << ' ' << src;
    }
    os << '\n';
  }
  return os.str();
}

// ------------------------------------------------------------ checkpoint

namespace {

constexpr char kCkptMagic[8] = {'F', 'C', 'M', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kCkptVersion = 1;

template <typename T>
void Put(std::ostream &out, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.write(reinterpret_cast<const char *>(buf), sizeof(T));
}

template <typename T>
T Get(std::istream &in) {
  unsigned char buf[sizeof(T)];
  in.read(reinterpret_cast<char *>(buf), sizeof(T));
  if (!in) Fail(ErrorKind::kFormat, "truncated checkpoint");
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace

void WriteCheckpoint(std::ostream &out, Model &model) {
  if (!model.initialized()) Fail(ErrorKind::kState, "cannot checkpoint an uninitialised model");
  const auto state = model.NamedState();
  out.write(kCkptMagic, sizeof(kCkptMagic));
  Put<std::uint32_t>(out, kCkptVersion);
  Put<std::uint32_t>(out, static_cast<std::uint32_t>(state.size()));
  for (const auto &[name, t] : state) {
    Put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    Put<std::uint32_t>(out, static_cast<std::uint32_t>(t->shape.size()));
    for (std::size_t d : t->shape) Put<std::uint64_t>(out, d);
    for (double v : t->data) Put<double>(out, v);
  }
  if (!out) Fail(ErrorKind::kIo, "failed writing checkpoint");
}

void ReadCheckpoint(std::istream &in, Model &model) {
  char magic[sizeof(kCkptMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCkptMagic, sizeof(magic)) != 0) {
    Fail(ErrorKind::kFormat, "bad checkpoint magic");
  }
  if (Get<std::uint32_t>(in) != kCkptVersion) Fail(ErrorKind::kFormat, "unsupported checkpoint version");
  if (!model.initialized()) model.Initialize(0);
  auto state = model.NamedState();
  const auto count = Get<std::uint32_t>(in);
  if (count != state.size()) {
    Fail(ErrorKind::kFormat, "checkpoint holds " + std::to_string(count) + " tensors, model has " +
                                 std::to_string(state.size()));
  }
  for (auto &[name, t] : state) {
    const auto len = Get<std::uint32_t>(in);
    std::string got(len, '\0');
    in.read(got.data(), len);
    if (!in || got != name) Fail(ErrorKind::kFormat, "checkpoint tensor '" + got + "' where '" + name + "' expected");
    const auto rank = Get<std::uint32_t>(in);
    Shape shape(rank);
    for (auto &d : shape) d = static_cast<std::size_t>(Get<std::uint64_t>(in));
    if (shape != t->shape) {
      Fail(ErrorKind::kShape, "checkpoint tensor '" + name + "' has shape " + ShapeString(shape) +
                                  ", model expects " + ShapeString(t->shape));
    }
    for (double &v : t->data) v = Get<double>(in);
  }
}

void SaveCheckpoint(const std::filesystem::path &path, Model &model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) Fail(ErrorKind::kIo, "cannot write " + path.string());
  WriteCheckpoint(out, model);
}

void LoadCheckpoint(const std::filesystem::path &path, Model &model) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kIo, "cannot open checkpoint " + path.string());
  ReadCheckpoint(in, model);
}

}  // namespace fusioncm::nn
