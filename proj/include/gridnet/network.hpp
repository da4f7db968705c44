#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gridnet/adam.hpp"
#include "gridnet/layers.hpp"
#include "gridnet/loss.hpp"
#include "gridnet/rng.hpp"
#include "gridnet/tensor.hpp"

namespace gridnet {

enum class LayerKind {
  kInput,
  kConv,
  kMaxPool,
  kDense,
  kRelu,
  kSoftmax,
  kFlatten,
  kGlobalAvgPool,
  kAdd,
  kSlice,
  kConcat,
};

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::kInput: return "input";
    case LayerKind::kConv: return "conv";
    case LayerKind::kMaxPool: return "maxpool";
    case LayerKind::kDense: return "dense";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kSoftmax: return "softmax";
    case LayerKind::kFlatten: return "flatten";
    case LayerKind::kGlobalAvgPool: return "gap";
    case LayerKind::kAdd: return "add";
    case LayerKind::kSlice: return "slice";
    case LayerKind::kConcat: return "concat";
  }
  return "?";
}

// One node of the layer graph. Only the attributes for the node's kind are
// meaningful; everything else stays defaulted.
struct LayerSpec {
  LayerKind kind = LayerKind::kInput;
  std::vector<int> inputs;  // producer node ids, all strictly earlier

  std::string name;  // parameter name prefix for conv/dense

  // conv
  Index out_channels = 0;
  Shape kernel, stride, padding;
  // maxpool
  Shape window;
  // dense
  Index fan_in = 0, fan_out = 0;
  // slice
  Shape slice_start, slice_extent;
  // init scheme for the weight: He-uniform by default, Glorot-uniform for
  // the dense layer feeding a softmax
  bool glorot = false;
};

// Ordered layer graph with named parameter tensors. Nodes may only consume
// earlier nodes, so the graph is acyclic by construction; skip connections
// are Add nodes with two producers.
template <typename Scalar>
class Network {
 public:
  struct Param {
    std::string name;
    Tensor<Scalar> value;
  };

  struct Tape {
    std::vector<Tensor<Scalar>> out;             // per-node activations
    std::vector<std::vector<Index>> pool_argmax; // per-node, pools only
  };

  Network() = default;

  // --- construction ---

  int add_input(Shape shape) {
    if (!layers_.empty()) throw ConstructionError("network: input must be the first node");
    LayerSpec spec;
    spec.kind = LayerKind::kInput;
    input_shape_ = shape;
    return push(std::move(spec), std::move(shape), -1, -1);
  }

  int add_conv(int in, std::string name, Index out_channels, Shape kernel, Shape stride,
               Shape padding, bool glorot = false) {
    const Shape& is = node_shape(in);
    LayerSpec spec;
    spec.kind = LayerKind::kConv;
    spec.inputs = {in};
    spec.name = name;
    spec.out_channels = out_channels;
    spec.kernel = kernel;
    spec.stride = std::move(stride);
    spec.padding = std::move(padding);
    spec.glorot = glorot;

    Shape kshape{out_channels, is[0]};
    kshape.insert(kshape.end(), kernel.begin(), kernel.end());
    const detail::ConvGeom g = detail::conv_geometry(is, kshape, spec.stride, spec.padding);
    Shape out{g.out_channels};
    out.insert(out.end(), g.out.begin(), g.out.end());

    const int w = add_param(name + "/kernel", Tensor<Scalar>(kshape));
    const int b = add_param(name + "/bias", Tensor<Scalar>(Shape{out_channels}));
    return push(std::move(spec), std::move(out), w, b);
  }

  int add_maxpool(int in, Shape window) {
    const Shape& is = node_shape(in);
    LayerSpec spec;
    spec.kind = LayerKind::kMaxPool;
    spec.inputs = {in};
    spec.window = std::move(window);
    const detail::PoolGeom g = detail::pool_geometry(is, spec.window);
    Shape out{g.channels};
    out.insert(out.end(), g.out.begin(), g.out.end());
    return push(std::move(spec), std::move(out), -1, -1);
  }

  int add_dense(int in, std::string name, Index fan_out, bool glorot = false) {
    const Shape& is = node_shape(in);
    LayerSpec spec;
    spec.kind = LayerKind::kDense;
    spec.inputs = {in};
    spec.name = name;
    spec.fan_in = numel(is);
    spec.fan_out = fan_out;
    spec.glorot = glorot;
    const int w = add_param(name + "/weight", Tensor<Scalar>(Shape{fan_out, spec.fan_in}));
    const int b = add_param(name + "/bias", Tensor<Scalar>(Shape{fan_out}));
    return push(std::move(spec), Shape{fan_out}, w, b);
  }

  int add_relu(int in) {
    LayerSpec spec;
    spec.kind = LayerKind::kRelu;
    spec.inputs = {in};
    Shape out = node_shape(in);
    return push(std::move(spec), std::move(out), -1, -1);
  }

  int add_softmax(int in) {
    const Shape& is = node_shape(in);
    if (is.size() != 1) {
      throw ConstructionError("softmax node expects a rank-1 producer, got " + shape_str(is));
    }
    LayerSpec spec;
    spec.kind = LayerKind::kSoftmax;
    spec.inputs = {in};
    Shape out = is;
    return push(std::move(spec), std::move(out), -1, -1);
  }

  int add_flatten(int in) {
    LayerSpec spec;
    spec.kind = LayerKind::kFlatten;
    spec.inputs = {in};
    return push(std::move(spec), Shape{numel(node_shape(in))}, -1, -1);
  }

  int add_global_avg_pool(int in) {
    const Shape& is = node_shape(in);
    if (is.size() < 2) throw ConstructionError("gap node expects spatial axes");
    LayerSpec spec;
    spec.kind = LayerKind::kGlobalAvgPool;
    spec.inputs = {in};
    return push(std::move(spec), Shape{is[0]}, -1, -1);
  }

  int add_add(int a, int b) {
    if (!same_shape(node_shape(a), node_shape(b))) {
      throw ConstructionError("add node: producer shapes differ, " + shape_str(node_shape(a)) +
                              " vs " + shape_str(node_shape(b)));
    }
    LayerSpec spec;
    spec.kind = LayerKind::kAdd;
    spec.inputs = {a, b};
    Shape out = node_shape(a);
    return push(std::move(spec), std::move(out), -1, -1);
  }

  int add_slice(int in, Shape start, Shape extent) {
    const Shape& is = node_shape(in);
    const Index sdims = static_cast<Index>(is.size()) - 1;
    if (static_cast<Index>(start.size()) != sdims ||
        static_cast<Index>(extent.size()) != sdims) {
      throw ConstructionError("slice node: start/extent rank mismatch");
    }
    for (Index a = 0; a < sdims; ++a) {
      if (start[a] < 0 || extent[a] < 1 || start[a] + extent[a] > is[a + 1]) {
        throw ConstructionError("slice node: box exceeds producer shape " + shape_str(is));
      }
    }
    LayerSpec spec;
    spec.kind = LayerKind::kSlice;
    spec.inputs = {in};
    spec.slice_start = std::move(start);
    spec.slice_extent = extent;
    Shape out{is[0]};
    out.insert(out.end(), extent.begin(), extent.end());
    return push(std::move(spec), std::move(out), -1, -1);
  }

  int add_concat(const std::vector<int>& ins) {
    if (ins.empty()) throw ConstructionError("concat node needs at least one producer");
    Index total = 0;
    for (int in : ins) {
      if (node_shape(in).size() != 1) {
        throw ConstructionError("concat node expects rank-1 producers");
      }
      total += node_shape(in)[0];
    }
    LayerSpec spec;
    spec.kind = LayerKind::kConcat;
    spec.inputs = ins;
    return push(std::move(spec), Shape{total}, -1, -1);
  }

  // Copies every non-input node of `sub`, rewiring its input to `input_node`
  // and prefixing parameter names. Parameter values are copied verbatim.
  // Returns the id of the spliced output node.
  int splice(const Network& sub, int input_node, const std::string& prefix) {
    if (!same_shape(sub.input_shape(), node_shape(input_node))) {
      throw ConstructionError("splice: subnetwork input " + shape_str(sub.input_shape()) +
                              " does not match node shape " +
                              shape_str(node_shape(input_node)));
    }
    std::vector<int> map(sub.layers_.size(), -1);
    map[0] = input_node;
    for (std::size_t n = 1; n < sub.layers_.size(); ++n) {
      LayerSpec spec = sub.layers_[n];
      for (int& in : spec.inputs) in = map[static_cast<std::size_t>(in)];
      if (!spec.name.empty()) spec.name = prefix + spec.name;
      int w = -1, b = -1;
      if (sub.layer_params_[n].first >= 0) {
        const Param& src = sub.params_[static_cast<std::size_t>(sub.layer_params_[n].first)];
        w = add_param(prefix + src.name, src.value);
      }
      if (sub.layer_params_[n].second >= 0) {
        const Param& src = sub.params_[static_cast<std::size_t>(sub.layer_params_[n].second)];
        b = add_param(prefix + src.name, src.value);
      }
      Shape out = sub.node_shapes_[n];
      map[n] = push(std::move(spec), std::move(out), w, b);
    }
    return map.back();
  }

  // He-uniform fan-in init for weights feeding ReLU, Glorot-uniform where
  // flagged; biases zero. Draw order follows the parameter manifest, in
  // double, so float32 and float64 networks share a bit pattern source.
  void init_params(std::uint64_t seed) {
    std::mt19937_64 rng(derive_seed(seed, 0x1217));
    for (std::size_t n = 0; n < layers_.size(); ++n) {
      const LayerSpec& spec = layers_[n];
      const auto [wi, bi] = layer_params_[n];
      if (wi < 0) continue;
      Tensor<Scalar>& w = params_[static_cast<std::size_t>(wi)].value;
      double fan_in = 0, fan_out = 0;
      if (spec.kind == LayerKind::kConv) {
        const Index kn = numel(spec.kernel);
        fan_in = static_cast<double>(node_shape(spec.inputs[0])[0] * kn);
        fan_out = static_cast<double>(spec.out_channels * kn);
      } else {
        fan_in = static_cast<double>(spec.fan_in);
        fan_out = static_cast<double>(spec.fan_out);
      }
      const double limit = spec.glorot ? std::sqrt(6.0 / (fan_in + fan_out))
                                       : std::sqrt(6.0 / fan_in);
      for (Index i = 0; i < w.size(); ++i) {
        w[i] = static_cast<Scalar>(uniform(rng, -limit, limit));
      }
      if (bi >= 0) params_[static_cast<std::size_t>(bi)].value.set_zero();
    }
  }

  // --- inspection ---

  int output_node() const { return static_cast<int>(layers_.size()) - 1; }
  const Shape& input_shape() const { return input_shape_; }
  const Shape& node_shape(int n) const {
    if (n < 0 || n >= static_cast<int>(node_shapes_.size())) {
      throw ConstructionError("network: node consumes undeclared producer " + std::to_string(n));
    }
    return node_shapes_[static_cast<std::size_t>(n)];
  }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  const LayerSpec& layer(int n) const { return layers_[static_cast<std::size_t>(n)]; }

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }

  std::vector<std::pair<std::string, Shape>> manifest() const {
    std::vector<std::pair<std::string, Shape>> m;
    m.reserve(params_.size());
    for (const Param& p : params_) m.emplace_back(p.name, p.value.shape());
    return m;
  }

  std::vector<Shape> param_shapes() const {
    std::vector<Shape> s;
    s.reserve(params_.size());
    for (const Param& p : params_) s.push_back(p.value.shape());
    return s;
  }

  Index param_count() const {
    Index n = 0;
    for (const Param& p : params_) n += p.value.size();
    return n;
  }

  int find_param(const std::string& name) const {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (params_[i].name == name) return static_cast<int>(i);
    }
    return -1;
  }

  int num_classes() const {
    return static_cast<int>(node_shapes_.back()[0]);
  }

  std::string arch_id;

  // --- execution ---

  Tensor<Scalar> forward(const Tensor<Scalar>& input, Tape* tape = nullptr) const {
    Tape local;
    Tape& t = tape ? *tape : local;
    t.out.assign(layers_.size(), {});
    t.pool_argmax.assign(layers_.size(), {});
    if (!same_shape(input.shape(), input_shape_)) {
      throw DimensionError("forward: input " + shape_str(input.shape()) +
                           " does not match network input " + shape_str(input_shape_));
    }
    for (std::size_t n = 0; n < layers_.size(); ++n) {
      const LayerSpec& spec = layers_[n];
      const auto in = [&](int k) -> const Tensor<Scalar>& {
        return t.out[static_cast<std::size_t>(spec.inputs[static_cast<std::size_t>(k)])];
      };
      switch (spec.kind) {
        case LayerKind::kInput:
          t.out[n] = input;
          break;
        case LayerKind::kConv:
          t.out[n] = conv_forward(in(0), weight(n), bias(n), spec.stride, spec.padding);
          break;
        case LayerKind::kMaxPool:
          t.out[n] = maxpool_forward(in(0), spec.window, &t.pool_argmax[n]);
          break;
        case LayerKind::kDense:
          t.out[n] = dense_forward(in(0), weight(n), bias(n));
          break;
        case LayerKind::kRelu:
          t.out[n] = relu(in(0));
          break;
        case LayerKind::kSoftmax:
          t.out[n] = softmax(in(0));
          break;
        case LayerKind::kFlatten:
          t.out[n] = in(0).reshaped(node_shapes_[n]);
          break;
        case LayerKind::kGlobalAvgPool:
          t.out[n] = global_avg_forward(in(0));
          break;
        case LayerKind::kAdd: {
          Tensor<Scalar> sum(node_shapes_[n]);
          sum.array() = in(0).array() + in(1).array();
          t.out[n] = std::move(sum);
          break;
        }
        case LayerKind::kSlice:
          t.out[n] = slice_forward(in(0), spec.slice_start, spec.slice_extent);
          break;
        case LayerKind::kConcat: {
          Tensor<Scalar> cat(node_shapes_[n]);
          Index off = 0;
          for (std::size_t k = 0; k < spec.inputs.size(); ++k) {
            const Tensor<Scalar>& piece = in(static_cast<int>(k));
            cat.vec().segment(off, piece.size()) = piece.vec();
            off += piece.size();
          }
          t.out[n] = std::move(cat);
          break;
        }
      }
      t.out[n].check_finite(layer_kind_name(spec.kind));
    }
    return t.out.back();
  }

  // Reverse sweep seeded with dL/d(output); adds parameter gradients into
  // grad_accum (shapes must match the manifest). Input gradient lands in
  // *input_grad when requested.
  void backward(const Tape& tape, const Tensor<Scalar>& out_grad,
                std::vector<Tensor<Scalar>>& grad_accum,
                Tensor<Scalar>* input_grad = nullptr) const {
    std::vector<Tensor<Scalar>> node_grad(layers_.size());
    node_grad.back() = out_grad;
    run_backward(tape, node_grad, grad_accum, input_grad, output_node());
  }

  // Cross-entropy on the network output. When the final node is a softmax
  // the seed is placed at its producer as (p - onehot); otherwise dL/dp
  // seeds the output directly.
  double backward_cross_entropy(const Tape& tape, int label,
                                std::vector<Tensor<Scalar>>& grad_accum,
                                Tensor<Scalar>* input_grad = nullptr) const {
    const int out = output_node();
    const Tensor<Scalar>& probs = tape.out[static_cast<std::size_t>(out)];
    const double loss = cross_entropy_loss(probs, label);
    std::vector<Tensor<Scalar>> node_grad(layers_.size());
    int start = out;
    if (layers_.back().kind == LayerKind::kSoftmax) {
      const int producer = layers_.back().inputs[0];
      Tensor<Scalar> seed = probs;
      seed[label] -= Scalar(1);
      node_grad[static_cast<std::size_t>(producer)] = std::move(seed);
      start = out - 1;
    } else {
      node_grad[static_cast<std::size_t>(out)] = cross_entropy_grad(probs, label);
    }
    run_backward(tape, node_grad, grad_accum, input_grad, start);
    return loss;
  }

  std::vector<Tensor<Scalar>> zero_grads() const {
    std::vector<Tensor<Scalar>> g;
    g.reserve(params_.size());
    for (const Param& p : params_) g.emplace_back(p.value.shape());
    return g;
  }

 private:
  const Tensor<Scalar>& weight(std::size_t n) const {
    return params_[static_cast<std::size_t>(layer_params_[n].first)].value;
  }
  const Tensor<Scalar>& bias(std::size_t n) const {
    return params_[static_cast<std::size_t>(layer_params_[n].second)].value;
  }

  int add_param(std::string name, Tensor<Scalar> value) {
    params_.push_back(Param{std::move(name), std::move(value)});
    return static_cast<int>(params_.size()) - 1;
  }

  int push(LayerSpec spec, Shape out_shape, int w, int b) {
    for (int in : spec.inputs) {
      if (in < 0 || in >= static_cast<int>(layers_.size())) {
        throw ConstructionError("network: node consumes undeclared producer " +
                                std::to_string(in));
      }
    }
    layers_.push_back(std::move(spec));
    node_shapes_.push_back(std::move(out_shape));
    layer_params_.emplace_back(w, b);
    return static_cast<int>(layers_.size()) - 1;
  }

  void run_backward(const Tape& tape, std::vector<Tensor<Scalar>>& node_grad,
                    std::vector<Tensor<Scalar>>& grad_accum, Tensor<Scalar>* input_grad,
                    int start) const {
    if (grad_accum.size() != params_.size()) {
      throw DimensionError("backward: gradient accumulator does not match parameter manifest");
    }
    const auto add_into = [](Tensor<Scalar>& acc, const Tensor<Scalar>& g, const Shape& shape) {
      if (acc.size() == 0) acc = Tensor<Scalar>(shape);
      acc.array() += g.array();
    };
    for (int n = start; n >= 1; --n) {
      const std::size_t un = static_cast<std::size_t>(n);
      Tensor<Scalar>& g = node_grad[un];
      if (g.size() == 0) continue;  // node not on any path to the loss
      g.check_finite("backward");
      const LayerSpec& spec = layers_[un];
      const auto in_val = [&](int k) -> const Tensor<Scalar>& {
        return tape.out[static_cast<std::size_t>(spec.inputs[static_cast<std::size_t>(k)])];
      };
      const auto in_shape = [&](int k) -> const Shape& {
        return node_shapes_[static_cast<std::size_t>(spec.inputs[static_cast<std::size_t>(k)])];
      };
      const auto to_input = [&](int k, const Tensor<Scalar>& gin) {
        add_into(node_grad[static_cast<std::size_t>(spec.inputs[static_cast<std::size_t>(k)])],
                 gin, in_shape(k));
      };
      switch (spec.kind) {
        case LayerKind::kInput:
          break;
        case LayerKind::kConv: {
          ConvGrads<Scalar> cg =
              conv_backward(in_val(0), weight(un), spec.stride, spec.padding, g);
          grad_accum[static_cast<std::size_t>(layer_params_[un].first)].array() +=
              cg.kernels.array();
          grad_accum[static_cast<std::size_t>(layer_params_[un].second)].array() +=
              cg.bias.array();
          to_input(0, cg.input);
          break;
        }
        case LayerKind::kMaxPool:
          to_input(0, maxpool_backward(in_shape(0), tape.pool_argmax[un], g));
          break;
        case LayerKind::kDense: {
          DenseGrads<Scalar> dg = dense_backward(in_val(0), weight(un), g);
          grad_accum[static_cast<std::size_t>(layer_params_[un].first)].array() +=
              dg.weights.array();
          grad_accum[static_cast<std::size_t>(layer_params_[un].second)].array() +=
              dg.bias.array();
          // dense flattens implicitly; restore the producer's shape
          to_input(0, dg.input.reshaped(in_shape(0)));
          break;
        }
        case LayerKind::kRelu:
          to_input(0, relu_backward(in_val(0), g));
          break;
        case LayerKind::kSoftmax:
          to_input(0, softmax_backward(tape.out[un], g));
          break;
        case LayerKind::kFlatten:
          to_input(0, g.reshaped(in_shape(0)));
          break;
        case LayerKind::kGlobalAvgPool:
          to_input(0, global_avg_backward(in_shape(0), g));
          break;
        case LayerKind::kAdd:
          to_input(0, g);
          to_input(1, g);
          break;
        case LayerKind::kSlice: {
          const std::size_t src = static_cast<std::size_t>(spec.inputs[0]);
          if (node_grad[src].size() == 0) node_grad[src] = Tensor<Scalar>(in_shape(0));
          slice_backward_add(in_shape(0), spec.slice_start, spec.slice_extent, g,
                             node_grad[src]);
          break;
        }
        case LayerKind::kConcat: {
          Index off = 0;
          for (std::size_t k = 0; k < spec.inputs.size(); ++k) {
            const Index len = numel(in_shape(static_cast<int>(k)));
            Tensor<Scalar> piece(in_shape(static_cast<int>(k)));
            piece.vec() = g.vec().segment(off, len);
            to_input(static_cast<int>(k), piece);
            off += len;
          }
          break;
        }
      }
      g = Tensor<Scalar>();  // free as we go
    }
    if (input_grad) {
      *input_grad = node_grad[0].size() ? std::move(node_grad[0]) : Tensor<Scalar>(input_shape_);
    }
  }

  std::vector<LayerSpec> layers_;
  std::vector<Shape> node_shapes_;
  std::vector<std::pair<int, int>> layer_params_;  // weight/bias index or -1
  std::vector<Param> params_;
  Shape input_shape_;
};

}  // namespace gridnet
