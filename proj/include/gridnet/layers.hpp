#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

#include "gridnet/errors.hpp"
#include "gridnet/tensor.hpp"

// Differentiable layer primitives. Tensors are channels-first:
// {C,H,W} for images, {C,H,W,D} for volumes. Convolution kernels are
// {F,C,k...}; im2col patches feed a single Eigen GEMM per call.

namespace gridnet {

template <typename Scalar>
using MatrixRM = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

inline const char* axis_name(Index sdims, Index axis) {
  static const char* names2[] = {"H", "W"};
  static const char* names3[] = {"H", "W", "D"};
  return sdims == 2 ? names2[axis] : names3[axis];
}

struct ConvGeom {
  Index sdims = 0;              // 2 or 3 spatial axes
  Index in_channels = 0, out_channels = 0;
  Shape in, kernel, stride, pad, out, padded;
  Index patch = 0;              // in_channels * prod(kernel)
  Index positions = 0;          // prod(out)
};

inline ConvGeom conv_geometry(const Shape& input, const Shape& kernels, const Shape& stride,
                              const Shape& padding) {
  ConvGeom g;
  g.sdims = static_cast<Index>(input.size()) - 1;
  if (g.sdims != 2 && g.sdims != 3) {
    throw DimensionError("conv: input must have a channel axis plus 2 or 3 spatial axes, got " +
                         shape_str(input));
  }
  if (static_cast<Index>(kernels.size()) != g.sdims + 2) {
    throw DimensionError("conv: kernel tensor must be {F,C,k...}, got " + shape_str(kernels));
  }
  if (static_cast<Index>(stride.size()) != g.sdims ||
      static_cast<Index>(padding.size()) != g.sdims) {
    throw DimensionError("conv: stride/padding must carry one entry per spatial axis");
  }
  g.in_channels = input[0];
  g.out_channels = kernels[0];
  if (kernels[1] != g.in_channels) {
    throw DimensionError("conv: kernel channel axis C=" + std::to_string(kernels[1]) +
                         " does not match input channels " + std::to_string(g.in_channels));
  }
  g.in.assign(input.begin() + 1, input.end());
  g.kernel.assign(kernels.begin() + 2, kernels.end());
  g.stride = stride;
  g.pad = padding;
  for (Index a = 0; a < g.sdims; ++a) {
    if (g.stride[a] < 1) throw DimensionError("conv: stride must be >= 1");
    if (g.pad[a] < 0) throw DimensionError("conv: padding must be >= 0");
    const Index padded = g.in[a] + 2 * g.pad[a];
    if (g.kernel[a] > padded) {
      throw DimensionError(std::string("conv: kernel axis ") + axis_name(g.sdims, a) + " (" +
                           std::to_string(g.kernel[a]) + ") exceeds padded input extent " +
                           std::to_string(padded));
    }
    g.padded.push_back(padded);
    g.out.push_back((padded - g.kernel[a]) / g.stride[a] + 1);
  }
  g.patch = g.in_channels * numel(g.kernel);
  g.positions = numel(g.out);
  return g;
}

// Zero-pad spatial axes; channels intact.
template <typename Scalar>
std::vector<Scalar> pad_spatial(const Tensor<Scalar>& input, const ConvGeom& g) {
  std::vector<Scalar> padded(static_cast<std::size_t>(g.in_channels * numel(g.padded)),
                             Scalar(0));
  const Scalar* src = input.data();
  Scalar* dst = padded.data();
  if (g.sdims == 2) {
    const Index H = g.in[0], W = g.in[1], PH = g.padded[0], PW = g.padded[1];
    for (Index c = 0; c < g.in_channels; ++c)
      for (Index y = 0; y < H; ++y)
        std::memcpy(dst + ((c * PH + y + g.pad[0]) * PW + g.pad[1]), src + (c * H + y) * W,
                    sizeof(Scalar) * static_cast<std::size_t>(W));
  } else {
    const Index H = g.in[0], W = g.in[1], D = g.in[2];
    const Index PH = g.padded[0], PW = g.padded[1], PD = g.padded[2];
    for (Index c = 0; c < g.in_channels; ++c)
      for (Index y = 0; y < H; ++y)
        for (Index x = 0; x < W; ++x)
          std::memcpy(dst + (((c * PH + y + g.pad[0]) * PW + x + g.pad[1]) * PD + g.pad[2]),
                      src + ((c * H + y) * W + x) * D, sizeof(Scalar) * static_cast<std::size_t>(D));
  }
  return padded;
}

// Patch matrix: row = (channel, kernel offset), column = output position.
template <typename Scalar>
void im2col(const std::vector<Scalar>& padded, const ConvGeom& g, std::vector<Scalar>& cols) {
  cols.resize(static_cast<std::size_t>(g.patch * g.positions));
  if (g.sdims == 2) {
    const Index PH = g.padded[0], PW = g.padded[1], KH = g.kernel[0], KW = g.kernel[1];
    const Index OH = g.out[0], OW = g.out[1], SH = g.stride[0], SW = g.stride[1];
    Index row = 0;
    for (Index c = 0; c < g.in_channels; ++c)
      for (Index ky = 0; ky < KH; ++ky)
        for (Index kx = 0; kx < KW; ++kx, ++row) {
          Scalar* dst = cols.data() + row * g.positions;
          for (Index oy = 0; oy < OH; ++oy) {
            const Scalar* src = padded.data() + (c * PH + oy * SH + ky) * PW + kx;
            if (SW == 1) {
              std::memcpy(dst, src, sizeof(Scalar) * static_cast<std::size_t>(OW));
              dst += OW;
            } else {
              for (Index ox = 0; ox < OW; ++ox) *dst++ = src[ox * SW];
            }
          }
        }
  } else {
    const Index PH = g.padded[0], PW = g.padded[1], PD = g.padded[2];
    const Index KH = g.kernel[0], KW = g.kernel[1], KD = g.kernel[2];
    const Index OH = g.out[0], OW = g.out[1], OD = g.out[2];
    const Index SH = g.stride[0], SW = g.stride[1], SD = g.stride[2];
    Index row = 0;
    for (Index c = 0; c < g.in_channels; ++c)
      for (Index ky = 0; ky < KH; ++ky)
        for (Index kx = 0; kx < KW; ++kx)
          for (Index kz = 0; kz < KD; ++kz, ++row) {
            Scalar* dst = cols.data() + row * g.positions;
            for (Index oy = 0; oy < OH; ++oy)
              for (Index ox = 0; ox < OW; ++ox) {
                const Scalar* src =
                    padded.data() + ((c * PH + oy * SH + ky) * PW + ox * SW + kx) * PD + kz;
                if (SD == 1) {
                  std::memcpy(dst, src, sizeof(Scalar) * static_cast<std::size_t>(OD));
                  dst += OD;
                } else {
                  for (Index oz = 0; oz < OD; ++oz) *dst++ = src[oz * SD];
                }
              }
          }
  }
}

// Transpose of im2col: scatter-add patch-matrix gradients back onto the
// padded input grid.
template <typename Scalar>
void col2im_add(const std::vector<Scalar>& cols, const ConvGeom& g, std::vector<Scalar>& padded) {
  padded.assign(static_cast<std::size_t>(g.in_channels * numel(g.padded)), Scalar(0));
  if (g.sdims == 2) {
    const Index PH = g.padded[0], PW = g.padded[1], KH = g.kernel[0], KW = g.kernel[1];
    const Index OH = g.out[0], OW = g.out[1], SH = g.stride[0], SW = g.stride[1];
    Index row = 0;
    for (Index c = 0; c < g.in_channels; ++c)
      for (Index ky = 0; ky < KH; ++ky)
        for (Index kx = 0; kx < KW; ++kx, ++row) {
          const Scalar* src = cols.data() + row * g.positions;
          for (Index oy = 0; oy < OH; ++oy) {
            Scalar* dst = padded.data() + (c * PH + oy * SH + ky) * PW + kx;
            for (Index ox = 0; ox < OW; ++ox) dst[ox * SW] += *src++;
          }
        }
  } else {
    const Index PH = g.padded[0], PW = g.padded[1], PD = g.padded[2];
    const Index KH = g.kernel[0], KW = g.kernel[1], KD = g.kernel[2];
    const Index OH = g.out[0], OW = g.out[1], OD = g.out[2];
    const Index SH = g.stride[0], SW = g.stride[1], SD = g.stride[2];
    Index row = 0;
    for (Index c = 0; c < g.in_channels; ++c)
      for (Index ky = 0; ky < KH; ++ky)
        for (Index kx = 0; kx < KW; ++kx)
          for (Index kz = 0; kz < KD; ++kz, ++row) {
            const Scalar* src = cols.data() + row * g.positions;
            for (Index oy = 0; oy < OH; ++oy)
              for (Index ox = 0; ox < OW; ++ox) {
                Scalar* dst =
                    padded.data() + ((c * PH + oy * SH + ky) * PW + ox * SW + kx) * PD + kz;
                for (Index oz = 0; oz < OD; ++oz) dst[oz * SD] += *src++;
              }
          }
  }
}

// Crop the padding margin back off; inverse of pad_spatial's placement.
template <typename Scalar>
void unpad_spatial_add(const std::vector<Scalar>& padded, const ConvGeom& g,
                       Tensor<Scalar>& grad) {
  Scalar* dst = grad.data();
  if (g.sdims == 2) {
    const Index H = g.in[0], W = g.in[1], PH = g.padded[0], PW = g.padded[1];
    for (Index c = 0; c < g.in_channels; ++c)
      for (Index y = 0; y < H; ++y) {
        const Scalar* src = padded.data() + ((c * PH + y + g.pad[0]) * PW + g.pad[1]);
        Scalar* row = dst + (c * H + y) * W;
        for (Index x = 0; x < W; ++x) row[x] += src[x];
      }
  } else {
    const Index H = g.in[0], W = g.in[1], D = g.in[2];
    const Index PH = g.padded[0], PW = g.padded[1], PD = g.padded[2];
    for (Index c = 0; c < g.in_channels; ++c)
      for (Index y = 0; y < H; ++y)
        for (Index x = 0; x < W; ++x) {
          const Scalar* src =
              padded.data() + (((c * PH + y + g.pad[0]) * PW + x + g.pad[1]) * PD + g.pad[2]);
          Scalar* run = dst + ((c * H + y) * W + x) * D;
          for (Index z = 0; z < D; ++z) run[z] += src[z];
        }
  }
}

}  // namespace detail

// --- convolution ---

template <typename Scalar>
Tensor<Scalar> conv_forward(const Tensor<Scalar>& input, const Tensor<Scalar>& kernels,
                            const Tensor<Scalar>& bias, const Shape& stride, const Shape& padding) {
  const detail::ConvGeom g =
      detail::conv_geometry(input.shape(), kernels.shape(), stride, padding);
  if (bias.rank() != 1 || bias.extent(0) != g.out_channels) {
    throw DimensionError("conv: bias must be {F=" + std::to_string(g.out_channels) + "}, got " +
                         shape_str(bias.shape()));
  }
  input.check_finite("conv input");

  const std::vector<Scalar> padded = detail::pad_spatial(input, g);
  std::vector<Scalar> cols;
  detail::im2col(padded, g, cols);

  Shape out_shape{g.out_channels};
  out_shape.insert(out_shape.end(), g.out.begin(), g.out.end());
  Tensor<Scalar> out(std::move(out_shape));

  Eigen::Map<const MatrixRM<Scalar>> K(kernels.data(), g.out_channels, g.patch);
  Eigen::Map<const MatrixRM<Scalar>> B(cols.data(), g.patch, g.positions);
  Eigen::Map<MatrixRM<Scalar>> O(out.data(), g.out_channels, g.positions);
  O.noalias() = K * B;
  O.colwise() += bias.vec();
  return out;
}

template <typename Scalar>
struct ConvGrads {
  Tensor<Scalar> input, kernels, bias;
};

template <typename Scalar>
ConvGrads<Scalar> conv_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& kernels,
                                const Shape& stride, const Shape& padding,
                                const Tensor<Scalar>& out_grad) {
  const detail::ConvGeom g =
      detail::conv_geometry(input.shape(), kernels.shape(), stride, padding);

  // Patch matrix is recomputed rather than cached from the forward pass;
  // GEMM dominates either way.
  const std::vector<Scalar> padded = detail::pad_spatial(input, g);
  std::vector<Scalar> cols;
  detail::im2col(padded, g, cols);

  ConvGrads<Scalar> grads{Tensor<Scalar>(input.shape()), Tensor<Scalar>(kernels.shape()),
                          Tensor<Scalar>(Shape{g.out_channels})};

  Eigen::Map<const MatrixRM<Scalar>> dO(out_grad.data(), g.out_channels, g.positions);
  Eigen::Map<const MatrixRM<Scalar>> B(cols.data(), g.patch, g.positions);
  Eigen::Map<MatrixRM<Scalar>> dK(grads.kernels.data(), g.out_channels, g.patch);
  dK.noalias() = dO * B.transpose();
  grads.bias.vec() = dO.rowwise().sum();

  std::vector<Scalar> dcols(static_cast<std::size_t>(g.patch * g.positions));
  Eigen::Map<const MatrixRM<Scalar>> K(kernels.data(), g.out_channels, g.patch);
  Eigen::Map<MatrixRM<Scalar>> dB(dcols.data(), g.patch, g.positions);
  dB.noalias() = K.transpose() * dO;

  std::vector<Scalar> dpadded;
  detail::col2im_add(dcols, g, dpadded);
  detail::unpad_spatial_add(dpadded, g, grads.input);
  return grads;
}

// --- max pooling ---
// Window per spatial axis, stride = window, ceil-mode: a trailing partial
// window is treated as padded with -inf, so output extent is ceil(in/w).

namespace detail {

struct PoolGeom {
  Index sdims = 0, channels = 0;
  Shape in, window, out;
};

inline PoolGeom pool_geometry(const Shape& input, const Shape& window) {
  PoolGeom g;
  g.sdims = static_cast<Index>(input.size()) - 1;
  if (g.sdims != 2 && g.sdims != 3) {
    throw DimensionError("maxpool: input must have 2 or 3 spatial axes, got " + shape_str(input));
  }
  if (static_cast<Index>(window.size()) != g.sdims) {
    throw DimensionError("maxpool: window must carry one entry per spatial axis");
  }
  g.channels = input[0];
  g.in.assign(input.begin() + 1, input.end());
  g.window = window;
  for (Index a = 0; a < g.sdims; ++a) {
    if (g.window[a] < 1) throw DimensionError("maxpool: window must be >= 1");
    if (g.window[a] > g.in[a]) {
      throw DimensionError(std::string("maxpool: window ") + std::to_string(g.window[a]) +
                           " larger than input axis " + axis_name(g.sdims, a) + " extent " +
                           std::to_string(g.in[a]));
    }
    g.out.push_back((g.in[a] + g.window[a] - 1) / g.window[a]);
  }
  return g;
}

}  // namespace detail

// argmax, when given, receives the flat input index of each window maximum
// for backward routing.
template <typename Scalar>
Tensor<Scalar> maxpool_forward(const Tensor<Scalar>& input, const Shape& window,
                               std::vector<Index>* argmax = nullptr) {
  const detail::PoolGeom g = detail::pool_geometry(input.shape(), window);
  Shape out_shape{g.channels};
  out_shape.insert(out_shape.end(), g.out.begin(), g.out.end());
  Tensor<Scalar> out(std::move(out_shape));
  if (argmax) argmax->assign(static_cast<std::size_t>(out.size()), 0);

  const Scalar* src = input.data();
  Scalar* dst = out.data();
  const bool three = g.sdims == 3;
  const Index H = g.in[0], W = g.in[1], D = three ? g.in[2] : 1;
  const Index OH = g.out[0], OW = g.out[1], OD = three ? g.out[2] : 1;
  const Index WH = g.window[0], WW = g.window[1], WD = three ? g.window[2] : 1;

  Index o = 0;
  for (Index c = 0; c < g.channels; ++c)
    for (Index oy = 0; oy < OH; ++oy)
      for (Index ox = 0; ox < OW; ++ox)
        for (Index oz = 0; oz < OD; ++oz, ++o) {
          const Index y0 = oy * WH, x0 = ox * WW, z0 = oz * WD;
          const Index y1 = std::min(y0 + WH, H), x1 = std::min(x0 + WW, W),
                      z1 = std::min(z0 + WD, D);
          Scalar best = -std::numeric_limits<Scalar>::infinity();
          Index best_ix = 0;
          for (Index y = y0; y < y1; ++y)
            for (Index x = x0; x < x1; ++x)
              for (Index z = z0; z < z1; ++z) {
                const Index ix = ((c * H + y) * W + x) * D + z;
                if (src[ix] > best) {
                  best = src[ix];
                  best_ix = ix;
                }
              }
          dst[o] = best;
          if (argmax) (*argmax)[static_cast<std::size_t>(o)] = best_ix;
        }
  return out;
}

template <typename Scalar>
Tensor<Scalar> maxpool_backward(const Shape& input_shape, const std::vector<Index>& argmax,
                                const Tensor<Scalar>& out_grad) {
  Tensor<Scalar> grad(input_shape);
  const Scalar* g = out_grad.data();
  for (std::size_t o = 0; o < argmax.size(); ++o) grad[argmax[o]] += g[o];
  return grad;
}

// --- dense ---

template <typename Scalar>
Tensor<Scalar> dense_forward(const Tensor<Scalar>& input, const Tensor<Scalar>& weights,
                             const Tensor<Scalar>& bias) {
  if (weights.rank() != 2) {
    throw DimensionError("dense: weights must be {fan_out, fan_in}, got " +
                         shape_str(weights.shape()));
  }
  const Index fan_out = weights.extent(0), fan_in = weights.extent(1);
  if (input.size() != fan_in) {
    throw DimensionError("dense: input length " + std::to_string(input.size()) +
                         " does not match fan-in " + std::to_string(fan_in));
  }
  if (bias.size() != fan_out) {
    throw DimensionError("dense: bias length " + std::to_string(bias.size()) +
                         " does not match fan-out " + std::to_string(fan_out));
  }
  Tensor<Scalar> out(Shape{fan_out});
  Eigen::Map<const MatrixRM<Scalar>> W(weights.data(), fan_out, fan_in);
  out.vec().noalias() = W * input.vec() + bias.vec();
  return out;
}

template <typename Scalar>
struct DenseGrads {
  Tensor<Scalar> input, weights, bias;
};

template <typename Scalar>
DenseGrads<Scalar> dense_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& weights,
                                  const Tensor<Scalar>& out_grad) {
  const Index fan_out = weights.extent(0), fan_in = weights.extent(1);
  DenseGrads<Scalar> grads{Tensor<Scalar>(input.shape()), Tensor<Scalar>(weights.shape()),
                           Tensor<Scalar>(Shape{fan_out})};
  Eigen::Map<const MatrixRM<Scalar>> W(weights.data(), fan_out, fan_in);
  Eigen::Map<MatrixRM<Scalar>> dW(grads.weights.data(), fan_out, fan_in);
  dW.noalias() = out_grad.vec() * input.vec().transpose();
  grads.bias.vec() = out_grad.vec();
  grads.input.vec().noalias() = W.transpose() * out_grad.vec();
  return grads;
}

// --- activations ---

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  Tensor<Scalar> out(x.shape());
  out.array() = x.array().max(Scalar(0));
  return out;
}

template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& out_grad) {
  Tensor<Scalar> grad(x.shape());
  grad.array() = (x.array() > Scalar(0)).select(out_grad.array(), Scalar(0));
  return grad;
}

// Numerically-stable softmax over the class axis (rank-1 input).
template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& x) {
  if (x.rank() != 1) {
    throw DimensionError("softmax: expected a rank-1 class-axis tensor, got " +
                         shape_str(x.shape()));
  }
  x.check_finite("softmax input");
  Tensor<Scalar> out(x.shape());
  const Scalar m = x.array().maxCoeff();
  out.array() = (x.array() - m).exp();
  out.array() /= out.array().sum();
  return out;
}

// J^T g with J the softmax Jacobian: p .* (g - <g,p>).
template <typename Scalar>
Tensor<Scalar> softmax_backward(const Tensor<Scalar>& probs, const Tensor<Scalar>& out_grad) {
  Tensor<Scalar> grad(probs.shape());
  const Scalar dot = (probs.array() * out_grad.array()).sum();
  grad.array() = probs.array() * (out_grad.array() - dot);
  return grad;
}

// --- global average over spatial axes: {C,S...} -> {C} ---

template <typename Scalar>
Tensor<Scalar> global_avg_forward(const Tensor<Scalar>& input) {
  const Index C = input.extent(0);
  const Index spatial = input.size() / C;
  Tensor<Scalar> out(Shape{C});
  Eigen::Map<const MatrixRM<Scalar>> X(input.data(), C, spatial);
  out.vec() = X.rowwise().mean();
  return out;
}

template <typename Scalar>
Tensor<Scalar> global_avg_backward(const Shape& input_shape, const Tensor<Scalar>& out_grad) {
  Tensor<Scalar> grad(input_shape);
  const Index C = input_shape[0];
  const Index spatial = numel(input_shape) / C;
  Eigen::Map<MatrixRM<Scalar>> G(grad.data(), C, spatial);
  G.colwise() = out_grad.vec() / Scalar(spatial);
  return grad;
}

// --- spatial slice: channels intact, box per spatial axis ---

template <typename Scalar>
Tensor<Scalar> slice_forward(const Tensor<Scalar>& input, const Shape& start,
                             const Shape& extent) {
  const Index sdims = input.rank() - 1;
  if (static_cast<Index>(start.size()) != sdims || static_cast<Index>(extent.size()) != sdims) {
    throw DimensionError("slice: start/extent must carry one entry per spatial axis");
  }
  for (Index a = 0; a < sdims; ++a) {
    if (start[a] < 0 || extent[a] < 1 || start[a] + extent[a] > input.extent(a + 1)) {
      throw DimensionError("slice: box exceeds input " + shape_str(input.shape()));
    }
  }
  const Index C = input.extent(0);
  Shape out_shape{C};
  out_shape.insert(out_shape.end(), extent.begin(), extent.end());
  Tensor<Scalar> out(out_shape);

  const bool three = sdims == 3;
  const Index H = input.extent(1), W = input.extent(2), D = three ? input.extent(3) : 1;
  const Index EH = extent[0], EW = extent[1], ED = three ? extent[2] : 1;
  const Index SY = start[0], SX = start[1], SZ = three ? start[2] : 0;
  Scalar* dst = out.data();
  const Scalar* src = input.data();
  for (Index c = 0; c < C; ++c)
    for (Index y = 0; y < EH; ++y)
      for (Index x = 0; x < EW; ++x) {
        const Index src_off = ((c * H + SY + y) * W + SX + x) * D + SZ;
        std::memcpy(dst, src + src_off, sizeof(Scalar) * static_cast<std::size_t>(ED));
        dst += ED;
      }
  return out;
}

template <typename Scalar>
void slice_backward_add(const Shape& input_shape, const Shape& start, const Shape& extent,
                        const Tensor<Scalar>& out_grad, Tensor<Scalar>& input_grad) {
  const Index sdims = static_cast<Index>(input_shape.size()) - 1;
  const bool three = sdims == 3;
  const Index C = input_shape[0];
  const Index H = input_shape[1], W = input_shape[2], D = three ? input_shape[3] : 1;
  const Index EH = extent[0], EW = extent[1], ED = three ? extent[2] : 1;
  const Index SY = start[0], SX = start[1], SZ = three ? start[2] : 0;
  const Scalar* src = out_grad.data();
  Scalar* dst = input_grad.data();
  for (Index c = 0; c < C; ++c)
    for (Index y = 0; y < EH; ++y)
      for (Index x = 0; x < EW; ++x) {
        Scalar* run = dst + ((c * H + SY + y) * W + SX + x) * D + SZ;
        for (Index z = 0; z < ED; ++z) run[z] += src[z];
        src += ED;
      }
}

}  // namespace gridnet
