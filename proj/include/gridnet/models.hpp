#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gridnet/decomp.hpp"
#include "gridnet/errors.hpp"
#include "gridnet/network.hpp"

namespace gridnet {

struct ArchOptions {
  Index base_width = 32;   // first-stage conv channels (VGG); ResNet stem is 16
  Index dense_width = 128; // hidden dense width of the VGG head
  double scale = 1.0;      // width multiplier; local CNNs shrink via this
  // Lifts the minimum-extent requirement and drops pooling on axes that are
  // already too small; always on for local CNNs over grid cells.
  bool adaptive_pools = false;
};

struct ArchitectureId {
  std::string family;  // "vgg9" | "resnet20"
  int spatial_dims = 2;
  ArchOptions opts;
};

inline Index scaled_width(Index width, double s) {
  return std::max<Index>(1, static_cast<Index>(std::llround(s * double(width))));
}

namespace detail {

// Pool with window 2 per spatial axis. An axis too small to halve keeps
// window 1; in adaptive mode an axis is only pooled while the result stays
// >= 2. A stage whose windows are all 1 is dropped.
template <typename Scalar>
int maybe_pool(Network<Scalar>& net, int node, bool adaptive) {
  const Shape& shape = net.node_shape(node);
  Shape window;
  bool any = false;
  for (std::size_t a = 1; a < shape.size(); ++a) {
    const Index e = shape[a];
    const bool pool = adaptive ? e >= 3 : e >= 2;
    window.push_back(pool ? 2 : 1);
    any = any || pool;
  }
  return any ? net.add_maxpool(node, window) : node;
}

inline void require_extents(const Shape& input_shape, Index minimum, const char* family) {
  for (std::size_t a = 1; a < input_shape.size(); ++a) {
    if (input_shape[a] < minimum) {
      throw ConstructionError(std::string(family) + ": spatial extent " +
                              std::to_string(input_shape[a]) + " is too small for the pooling " +
                              "depth (needs >= " + std::to_string(minimum) +
                              "; use adaptive pooling for subimage-sized inputs)");
    }
  }
}

inline Shape ones_like_spatial(const Shape& input_shape) {
  return Shape(input_shape.size() - 1, 1);
}

inline Shape kernel3(const Shape& input_shape) {
  return Shape(input_shape.size() - 1, 3);
}

}  // namespace detail

// Nine 3x3 (3x3x3) convolutions in four stages of widths c,2c,4c,8c with a
// 2x max-pool after each stage, then dense -> ReLU -> dense -> softmax.
// Same-padding keeps spatial reduction at the pools.
template <typename Scalar>
Network<Scalar> build_vgg9(const Shape& input_shape, int num_classes, const ArchOptions& opts) {
  if (input_shape.size() != 3 && input_shape.size() != 4) {
    throw ConstructionError("vgg9: input must be {C,H,W} or {C,H,W,D}, got " +
                            shape_str(input_shape));
  }
  detail::require_extents(input_shape, opts.adaptive_pools ? 2 : 16, "vgg9");

  const Index c = opts.base_width;
  const Index widths[9] = {c, c, 2 * c, 2 * c, 4 * c, 4 * c, 8 * c, 8 * c, 8 * c};
  const int stage_sizes[4] = {2, 2, 2, 3};

  Network<Scalar> net;
  net.arch_id = "vgg9-" + std::to_string(input_shape.size() - 1) + "d";
  int node = net.add_input(input_shape);
  const Shape kernel = detail::kernel3(input_shape);
  const Shape stride = detail::ones_like_spatial(input_shape);
  const Shape padding = detail::ones_like_spatial(input_shape);

  int conv = 0;
  for (int stage = 0; stage < 4; ++stage) {
    for (int i = 0; i < stage_sizes[stage]; ++i, ++conv) {
      node = net.add_conv(node, "conv" + std::to_string(conv + 1),
                          scaled_width(widths[conv], opts.scale), kernel, stride, padding);
      node = net.add_relu(node);
    }
    node = detail::maybe_pool(net, node, opts.adaptive_pools);
  }
  node = net.add_flatten(node);
  node = net.add_dense(node, "fc1", scaled_width(opts.dense_width, opts.scale));
  node = net.add_relu(node);
  node = net.add_dense(node, "fc2", num_classes, /*glorot=*/true);
  net.add_softmax(node);
  return net;
}

// Twenty conv blocks (3x3 conv + ReLU) in stages of widths 16,32,64 with a
// pool between stages and a global-average head. Each block output receives
// a skip from the input of its third-preceding block (the stem feeds the
// first junction), through a 1x1 projection when shapes differ. Junctions
// therefore sit at blocks 4..20.
template <typename Scalar>
Network<Scalar> build_resnet20(const Shape& input_shape, int num_classes,
                               const ArchOptions& opts) {
  if (input_shape.size() != 3 && input_shape.size() != 4) {
    throw ConstructionError("resnet20: input must be {C,H,W} or {C,H,W,D}, got " +
                            shape_str(input_shape));
  }
  detail::require_extents(input_shape, opts.adaptive_pools ? 2 : 8, "resnet20");

  const Index sw[3] = {scaled_width(16, opts.scale), scaled_width(32, opts.scale),
                       scaled_width(64, opts.scale)};

  Network<Scalar> net;
  net.arch_id = "resnet20-" + std::to_string(input_shape.size() - 1) + "d";
  const Shape kernel = detail::kernel3(input_shape);
  const Shape stride = detail::ones_like_spatial(input_shape);
  const Shape padding = detail::ones_like_spatial(input_shape);

  int node = net.add_input(input_shape);
  node = net.add_conv(node, "stem", sw[0], kernel, stride, padding);
  node = net.add_relu(node);

  std::vector<int> block_out{node};  // block_out[0] = stem activation
  for (int j = 1; j <= 20; ++j) {
    const int stage = j <= 7 ? 0 : (j <= 14 ? 1 : 2);
    int prev = block_out.back();
    if (j == 8 || j == 15) prev = detail::maybe_pool(net, prev, opts.adaptive_pools);
    int out = net.add_conv(prev, "block" + std::to_string(j), sw[stage], kernel, stride, padding);
    out = net.add_relu(out);
    if (j >= 4) {
      int src = block_out[static_cast<std::size_t>(j - 4)];
      if (!same_shape(net.node_shape(src), net.node_shape(out))) {
        const Shape& from = net.node_shape(src);
        const Shape& to = net.node_shape(out);
        Shape proj_stride, proj_kernel(from.size() - 1, 1), proj_pad(from.size() - 1, 0);
        for (std::size_t a = 1; a < from.size(); ++a) {
          proj_stride.push_back(from[a] > to[a] ? 2 : 1);
        }
        src = net.add_conv(src, "skip" + std::to_string(j), to[0], proj_kernel, proj_stride,
                           proj_pad);
      }
      out = net.add_add(out, src);
    }
    block_out.push_back(out);
  }

  node = net.add_global_avg_pool(block_out.back());
  node = net.add_dense(node, "fc", num_classes, /*glorot=*/true);
  net.add_softmax(node);
  return net;
}

template <typename Scalar>
Network<Scalar> build_architecture(const std::string& family, const Shape& input_shape,
                                   int num_classes, const ArchOptions& opts) {
  if (family == "vgg9") return build_vgg9<Scalar>(input_shape, num_classes, opts);
  if (family == "resnet20") return build_resnet20<Scalar>(input_shape, num_classes, opts);
  throw ConstructionError("unknown architecture family '" + family + "'");
}

// One proportionally narrower copy of the global architecture per grid cell.
// Default width scale is 1/sqrt(N) of the global scale, so conv parameters
// (which go as scale^2) of all N locals together roughly match one global.
template <typename Scalar>
std::vector<Network<Scalar>> build_local_cnns(const std::string& family,
                                              const GridDecomposition& grid, int num_classes,
                                              Index channels, const ArchOptions& global_opts,
                                              std::uint64_t base_seed, double local_scale = 0.0) {
  const int n = grid.n_subimages;
  const double s =
      local_scale > 0.0 ? local_scale : global_opts.scale / std::sqrt(double(n));
  std::vector<Network<Scalar>> locals;
  locals.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const Shape ext = grid.cell_extent(i);
    for (Index e : ext) {
      if (e < 2) {
        throw InfeasibleGridError("local cnn: cell " + std::to_string(i) + " extent " +
                                  shape_str(ext) + " is smaller than one kernel");
      }
    }
    Shape cell_shape{channels};
    cell_shape.insert(cell_shape.end(), ext.begin(), ext.end());
    ArchOptions opts = global_opts;
    opts.scale = s;
    opts.adaptive_pools = true;
    Network<Scalar> net = build_architecture<Scalar>(family, cell_shape, num_classes, opts);
    net.arch_id += "-local" + std::to_string(i);
    net.init_params(base_seed + static_cast<std::uint64_t>(i));
    locals.push_back(std::move(net));
  }
  return locals;
}

// Dense feedforward aggregator over the K*N local probability values:
// four hidden layers of width max(64, 2*K*N) with ReLU, then K + softmax.
template <typename Scalar>
Network<Scalar> build_aggregator_dnn(int n_subimages, int num_classes, std::uint64_t seed) {
  if (n_subimages < 1 || num_classes < 1) {
    throw ConstructionError("aggregator: need N >= 1 and K >= 1");
  }
  const Index in_width = static_cast<Index>(n_subimages) * num_classes;
  const Index hidden = std::max<Index>(64, 2 * in_width);
  Network<Scalar> net;
  net.arch_id = "dnn-agg";
  int node = net.add_input(Shape{in_width});
  for (int h = 0; h < 4; ++h) {
    node = net.add_dense(node, "fc" + std::to_string(h + 1), hidden);
    node = net.add_relu(node);
  }
  node = net.add_dense(node, "fc5", num_classes, /*glorot=*/true);
  net.add_softmax(node);
  net.init_params(seed);
  return net;
}

// The whole CNN-DNN as a single graph: slice out each grid cell, run the
// local subgraphs to their softmaxes, concatenate the K*N probabilities in
// cell order, and aggregate with the DNN. Gradients flow end to end.
template <typename Scalar>
Network<Scalar> build_coherent(const std::string& family, const GridDecomposition& grid,
                               int num_classes, Index channels, const ArchOptions& opts,
                               std::uint64_t seed) {
  std::vector<Network<Scalar>> locals =
      build_local_cnns<Scalar>(family, grid, num_classes, channels, opts, seed);
  Network<Scalar> dnn =
      build_aggregator_dnn<Scalar>(grid.n_subimages, num_classes,
                                   seed + static_cast<std::uint64_t>(grid.n_subimages));

  Network<Scalar> net;
  net.arch_id = family + "-dnn-coherent-" + grid_string(grid.grid_counts);
  Shape input_shape{channels};
  input_shape.insert(input_shape.end(), grid.spatial_extents.begin(),
                     grid.spatial_extents.end());
  const int input = net.add_input(input_shape);

  std::vector<int> local_outs;
  for (int i = 0; i < grid.n_subimages; ++i) {
    const int cell = net.add_slice(input, grid.cell_start(i), grid.cell_extent(i));
    local_outs.push_back(
        net.splice(locals[static_cast<std::size_t>(i)], cell, "local" + std::to_string(i) + "/"));
  }
  const int cat = net.add_concat(local_outs);
  net.splice(dnn, cat, "dnn/");
  return net;
}

// Copies every pretrained local parameter into the matching local subgraph
// of the coherent model, bit-exactly. Aggregator parameters are left as
// freshly initialized.
template <typename Scalar>
void transplant_weights(const std::vector<Network<Scalar>>& pretrained_locals,
                        Network<Scalar>& coherent) {
  const std::size_t n = pretrained_locals.size();
  for (const auto& p : coherent.params()) {
    if (p.name.rfind("local", 0) != 0) continue;
    const std::size_t slash = p.name.find('/');
    const std::size_t index = static_cast<std::size_t>(std::stoull(p.name.substr(5, slash - 5)));
    if (index >= n) {
      throw TransplantError("transplant: coherent model expects local " + std::to_string(index) +
                            " but only " + std::to_string(n) + " pretrained locals were given");
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::string prefix = "local" + std::to_string(i) + "/";
    for (const auto& src : pretrained_locals[i].params()) {
      const int dst_ix = coherent.find_param(prefix + src.name);
      if (dst_ix < 0) {
        throw TransplantError("transplant: coherent model has no parameter " + prefix + src.name);
      }
      auto& dst = coherent.params()[static_cast<std::size_t>(dst_ix)].value;
      if (!same_shape(dst.shape(), src.value.shape())) {
        throw TransplantError("transplant: " + prefix + src.name + " is " +
                              shape_str(src.value.shape()) + " in the pretrained local but " +
                              shape_str(dst.shape()) + " in the coherent model");
      }
      dst = src.value;
    }
  }
}

template <typename Scalar>
Index param_count(const Network<Scalar>& net) {
  return net.param_count();
}

}  // namespace gridnet
