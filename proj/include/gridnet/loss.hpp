#pragma once

#include <cmath>
#include <string>

#include "gridnet/errors.hpp"
#include "gridnet/tensor.hpp"

namespace gridnet {

// Probabilities are clamped to [kLogClamp, 1] before the log so a saturated
// softmax cannot produce -inf.
inline constexpr double kLogClamp = 1e-12;

template <typename Scalar>
double cross_entropy_loss(const Tensor<Scalar>& probs, int label) {
  if (probs.rank() != 1) {
    throw DimensionError("cross_entropy: expected a rank-1 distribution, got " +
                         shape_str(probs.shape()));
  }
  if (label < 0 || label >= probs.size()) {
    throw IndexError("cross_entropy: label " + std::to_string(label) + " out of range for K=" +
                     std::to_string(probs.size()));
  }
  const double p = std::min(1.0, std::max(kLogClamp, static_cast<double>(probs[label])));
  return -std::log(p);
}

// dL/dp for loss = -log(p[label]); pairs with softmax_backward on the
// generic path. Training fuses softmax and loss instead (see network.hpp).
template <typename Scalar>
Tensor<Scalar> cross_entropy_grad(const Tensor<Scalar>& probs, int label) {
  Tensor<Scalar> grad(probs.shape());
  const double p = std::min(1.0, std::max(kLogClamp, static_cast<double>(probs[label])));
  grad[label] = static_cast<Scalar>(-1.0 / p);
  return grad;
}

}  // namespace gridnet
