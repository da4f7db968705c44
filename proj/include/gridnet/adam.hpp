#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gridnet/errors.hpp"
#include "gridnet/tensor.hpp"

namespace gridnet {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First/second moment accumulators per parameter, one shared step counter.
template <typename Scalar>
struct AdamState {
  AdamConfig config;
  std::vector<Tensor<Scalar>> m, v;
  std::int64_t t = 0;

  AdamState() = default;
  AdamState(AdamConfig cfg, const std::vector<Shape>& param_shapes) : config(cfg) {
    m.reserve(param_shapes.size());
    v.reserve(param_shapes.size());
    for (const Shape& s : param_shapes) {
      m.emplace_back(s);
      v.emplace_back(s);
    }
  }
};

// Standard Adam update with bias correction; increments state.t.
template <typename Scalar>
void adam_step(std::vector<Tensor<Scalar>*> params, const std::vector<Tensor<Scalar>>& grads,
               AdamState<Scalar>& state) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw DimensionError("adam: parameter/gradient/state counts disagree");
  }
  state.t += 1;
  const Scalar b1 = static_cast<Scalar>(state.config.beta1);
  const Scalar b2 = static_cast<Scalar>(state.config.beta2);
  const Scalar corr1 = static_cast<Scalar>(1.0 - std::pow(state.config.beta1, state.t));
  const Scalar corr2 = static_cast<Scalar>(1.0 - std::pow(state.config.beta2, state.t));
  const Scalar lr = static_cast<Scalar>(state.config.lr);
  const Scalar eps = static_cast<Scalar>(state.config.epsilon);

  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<Scalar>& p = *params[i];
    const Tensor<Scalar>& g = grads[i];
    if (!same_shape(p.shape(), g.shape()) || !same_shape(p.shape(), state.m[i].shape())) {
      throw DimensionError("adam: shape mismatch at parameter " + std::to_string(i) + ": " +
                           shape_str(p.shape()) + " vs " + shape_str(g.shape()));
    }
    g.check_finite("adam gradient");
    auto m = state.m[i].array();
    auto v = state.v[i].array();
    m = b1 * m + (Scalar(1) - b1) * g.array();
    v = b2 * v + (Scalar(1) - b2) * g.array().square();
    p.array() -= lr * (m / corr1) / ((v / corr2).sqrt() + eps);
  }
}

}  // namespace gridnet
