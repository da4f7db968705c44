#pragma once

// Test-side oracles, written independently of the library internals they
// check: central finite differences for gradients, and small random-tensor
// helpers.

#include <cmath>
#include <random>

#include "gridnet/network.hpp"
#include "gridnet/rng.hpp"
#include "gridnet/tensor.hpp"

namespace testutil {

// Central difference (L(x+h) - L(x-h)) / 2h through an arbitrary scalar slot.
template <typename LossFn>
double fd_central(const LossFn& loss, double& slot, double h = 1e-5) {
  const double keep = slot;
  slot = keep + h;
  const double lp = loss();
  slot = keep - h;
  const double lm = loss();
  slot = keep;
  return (lp - lm) / (2.0 * h);
}

// Relative error with a magnitude floor: gradients below 1e-3 are compared
// absolutely at 1e-7 rather than proportionally, matching the FD noise floor.
inline double rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), 1e-3});
}

inline gridnet::Tensor<double> random_tensor(gridnet::Shape shape, std::mt19937_64& rng,
                                             double lo = -1.0, double hi = 1.0) {
  gridnet::Tensor<double> t(std::move(shape));
  for (gridnet::Index i = 0; i < t.size(); ++i) t[i] = gridnet::uniform(rng, lo, hi);
  return t;
}

// ReLU/maxpool networks are piecewise smooth; zero-initialized biases put
// kinks exactly at the evaluation point (e.g. a conv over an all-clipped
// patch outputs exactly its bias). Jittering every parameter moves the
// check to a generic, differentiable point.
template <typename Scalar>
void jitter_params(gridnet::Network<Scalar>& net, std::mt19937_64& rng, double scale = 0.05) {
  for (auto& p : net.params()) {
    for (gridnet::Index i = 0; i < p.value.size(); ++i) {
      p.value[i] += static_cast<Scalar>(gridnet::uniform(rng, -scale, scale));
    }
  }
}

// Checks one coordinate. A central difference that straddles a kink
// disagrees with the (correct) one-sided analytic gradient, so a suspect
// coordinate is re-measured at h/10 and h/100: a crossing leaves the
// interval and the error collapses, a genuine backward bug does not.
template <typename LossFn>
double fd_coord_err(const LossFn& loss, double& slot, double analytic, double h = 1e-5) {
  double err = rel_err(analytic, fd_central(loss, slot, h));
  for (int refine = 0; refine < 2 && err >= 1e-4; ++refine) {
    h /= 10.0;
    err = rel_err(analytic, fd_central(loss, slot, h));
  }
  return err;
}

}  // namespace testutil
