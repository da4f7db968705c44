#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gridnet/checkpoint.hpp"
#include "gridnet/decomp.hpp"
#include "gridnet/models.hpp"
#include "gridnet/network.hpp"
#include "gridnet/rng.hpp"
#include "gridnet/strategies.hpp"

// Built-in invariant and gradient suites behind the `check` and `gradcheck`
// CLI verbs. The test suite under tests/ carries its own independent
// oracles; these are the runtime-accessible counterparts.

namespace gridnet::selfcheck {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

namespace detail {

// Relative error with a small-magnitude floor so near-zero gradients are
// compared absolutely (|a-n| < 1e-7) rather than proportionally.
inline double rel_err(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-3});
}

template <typename LossFn>
double central_diff(const LossFn& loss, double& slot, double h = 1e-5) {
  const double keep = slot;
  slot = keep + h;
  const double lp = loss();
  slot = keep - h;
  const double lm = loss();
  slot = keep;
  return (lp - lm) / (2.0 * h);
}

inline Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = uniform(rng, -scale, scale);
  return t;
}

// ReLU nets are only piecewise smooth: a coordinate whose +-h interval
// straddles a kink makes the central difference average two branches. A
// suspect coordinate is re-measured at smaller h; crossings collapse,
// genuine backward bugs stay.
template <typename LossFn>
double coord_err(const LossFn& loss, double& slot, double analytic) {
  double h = 1e-5;
  double err = rel_err(analytic, central_diff(loss, slot, h));
  for (int refine = 0; refine < 2 && err >= 1e-4; ++refine) {
    h /= 10.0;
    err = rel_err(analytic, central_diff(loss, slot, h));
  }
  return err;
}

// Max relative error of analytic parameter+input gradients against central
// differences of the cross-entropy loss. Parameters are jittered first so
// the check runs at a generic differentiable point (zero-initialized biases
// otherwise put ReLU kinks exactly at the evaluation point).
inline double network_grad_error(Network<double>& net, std::mt19937_64& rng) {
  for (auto& p : net.params()) {
    for (Index i = 0; i < p.value.size(); ++i) p.value[i] += uniform(rng, -0.05, 0.05);
  }
  const Tensor<double> input = random_tensor(net.input_shape(), rng);
  const int label = static_cast<int>(rng() % static_cast<std::uint64_t>(net.num_classes()));

  Network<double>::Tape tape;
  net.forward(input, &tape);
  std::vector<Tensor<double>> grads = net.zero_grads();
  Tensor<double> input_grad;
  net.backward_cross_entropy(tape, label, grads, &input_grad);

  const auto loss = [&] { return cross_entropy_loss(net.forward(input), label); };
  double worst = 0.0;
  for (std::size_t p = 0; p < net.params().size(); ++p) {
    Tensor<double>& value = net.params()[p].value;
    for (Index i = 0; i < value.size(); ++i) {
      worst = std::max(worst, coord_err(loss, value[i], grads[p][i]));
    }
  }
  Tensor<double> in_copy = input;
  const auto loss_in = [&] { return cross_entropy_loss(net.forward(in_copy), label); };
  for (Index i = 0; i < in_copy.size(); ++i) {
    worst = std::max(worst, coord_err(loss_in, in_copy[i], input_grad[i]));
  }
  return worst;
}

}  // namespace detail

inline std::vector<CheckResult> run_gradient_checks(int seeds) {
  std::vector<CheckResult> results;
  const auto add = [&](const std::string& name, double worst, double tol = 1e-4) {
    results.push_back({name, worst < tol,
                       "max rel err " + std::to_string(worst) + " over " +
                           std::to_string(seeds) + " seeds (tol " + std::to_string(tol) + ")"});
  };

  double worst_conv2d = 0, worst_conv3d = 0, worst_pool = 0, worst_dense = 0, worst_net = 0,
         worst_coherent = 0;
  for (int s = 0; s < seeds; ++s) {
    std::mt19937_64 rng(derive_seed(0xc0ffee, static_cast<std::uint64_t>(s)));
    {
      Network<double> net;
      int n = net.add_input({2, 5, 5});
      n = net.add_conv(n, "conv", 3, {3, 3}, {1, 1}, {1, 1});
      n = net.add_relu(n);
      n = net.add_flatten(n);
      n = net.add_dense(n, "fc", 3, true);
      net.add_softmax(n);
      net.init_params(rng());
      worst_conv2d = std::max(worst_conv2d, detail::network_grad_error(net, rng));
    }
    {
      Network<double> net;
      int n = net.add_input({1, 4, 4, 3});
      n = net.add_conv(n, "conv", 2, {3, 3, 3}, {1, 1, 1}, {1, 1, 1});
      n = net.add_relu(n);
      n = net.add_flatten(n);
      n = net.add_dense(n, "fc", 2, true);
      net.add_softmax(n);
      net.init_params(rng());
      worst_conv3d = std::max(worst_conv3d, detail::network_grad_error(net, rng));
    }
    {
      Network<double> net;
      int n = net.add_input({1, 4, 4});
      n = net.add_maxpool(n, {2, 2});
      n = net.add_flatten(n);
      n = net.add_dense(n, "fc", 3, true);
      net.add_softmax(n);
      net.init_params(rng());
      worst_pool = std::max(worst_pool, detail::network_grad_error(net, rng));
    }
    {
      Network<double> net;
      int n = net.add_input({8});
      n = net.add_dense(n, "fc1", 4);
      n = net.add_relu(n);
      n = net.add_dense(n, "fc2", 3, true);
      net.add_softmax(n);
      net.init_params(rng());
      worst_dense = std::max(worst_dense, detail::network_grad_error(net, rng));
    }
    {
      // small VGG-style stack: 2 conv, 1 pool, dense head
      Network<double> net;
      int n = net.add_input({2, 6, 6});
      n = net.add_conv(n, "conv1", 3, {3, 3}, {1, 1}, {1, 1});
      n = net.add_relu(n);
      n = net.add_conv(n, "conv2", 3, {3, 3}, {1, 1}, {1, 1});
      n = net.add_relu(n);
      n = net.add_maxpool(n, {2, 2});
      n = net.add_flatten(n);
      n = net.add_dense(n, "fc", 3, true);
      net.add_softmax(n);
      net.init_params(rng());
      worst_net = std::max(worst_net, detail::network_grad_error(net, rng));
    }
    if (s < 3) {  // end-to-end coherent model is the expensive case
      const GridDecomposition grid = make_grid({8, 8}, {2, 2});
      ArchOptions opts;
      opts.base_width = 2;
      opts.dense_width = 8;
      Network<double> net = build_coherent<double>("vgg9", grid, 3, 1, opts, rng());
      worst_coherent = std::max(worst_coherent, detail::network_grad_error(net, rng));
    }
  }
  add("gradcheck conv2d", worst_conv2d);
  add("gradcheck conv3d", worst_conv3d);
  add("gradcheck maxpool", worst_pool);
  add("gradcheck dense", worst_dense);
  add("gradcheck small vgg stack", worst_net);
  add("gradcheck coherent 8x8/2x2", worst_coherent);
  return results;
}

inline std::vector<CheckResult> run_oracle_checks() {
  std::vector<CheckResult> results;
  std::mt19937_64 rng(0x5e1fc4ec);

  {  // decomposition round-trip, random shapes and the paper grids
    bool ok = true;
    std::string detail;
    const std::vector<std::pair<Shape, Shape>> fixed = {
        {{32, 32}, {2, 2}}, {{180, 180}, {4, 4}}, {{128, 128, 64}, {4, 4, 2}}};
    for (int t = 0; t < 200 + static_cast<int>(fixed.size()) && ok; ++t) {
      Shape extents, counts;
      if (t < static_cast<int>(fixed.size())) {
        extents = fixed[static_cast<std::size_t>(t)].first;
        counts = fixed[static_cast<std::size_t>(t)].second;
      } else {
        const int sdims = rng() % 2 ? 2 : 3;
        for (int a = 0; a < sdims; ++a) {
          const Index e = 2 + static_cast<Index>(rng() % 40);
          extents.push_back(e);
          counts.push_back(1 + static_cast<Index>(rng() % static_cast<std::uint64_t>(e)));
        }
      }
      const GridDecomposition grid = make_grid(extents, counts);
      Shape img_shape{1 + static_cast<Index>(rng() % 3)};
      img_shape.insert(img_shape.end(), extents.begin(), extents.end());
      const Tensor<double> img = detail::random_tensor(img_shape, rng);
      const Tensor<double> back = reassemble(extract_subimages(img, grid), grid);
      if (std::memcmp(img.data(), back.data(), sizeof(double) * img.size()) != 0) {
        ok = false;
        detail = "round-trip mismatch for " + shape_str(extents) + " grid " + shape_str(counts);
      }
    }
    results.push_back({"decomposition round-trip", ok, ok ? "203 cases bit-exact" : detail});
  }

  {  // aggregation vs direct recomputation
    bool ok = true;
    std::string detail;
    for (int t = 0; t < 10000 && ok; ++t) {
      const int n = 1 + static_cast<int>(rng() % 6), k = 2 + static_cast<int>(rng() % 6);
      ProbabilityMatrix<double> pm(n, k);
      for (int r = 0; r < n; ++r) {
        double sum = 0;
        for (int c = 0; c < k; ++c) {
          // coarse values force frequent exact ties
          pm(r, c) = double(1 + rng() % 4);
          sum += pm(r, c);
        }
        for (int c = 0; c < k; ++c) pm(r, c) /= sum;
      }
      // average: row-order sum, divide once, first-max scan
      int avg_expect = 0;
      {
        std::vector<double> mean(static_cast<std::size_t>(k), 0);
        for (int r = 0; r < n; ++r)
          for (int c = 0; c < k; ++c) mean[static_cast<std::size_t>(c)] += pm(r, c);
        for (int c = 0; c < k; ++c) mean[static_cast<std::size_t>(c)] /= n;
        for (int c = 1; c < k; ++c)
          if (mean[static_cast<std::size_t>(c)] > mean[static_cast<std::size_t>(avg_expect)])
            avg_expect = c;
      }
      // majority: votes, then max voter probability among tied classes
      int maj_expect = 0;
      {
        std::vector<int> votes(static_cast<std::size_t>(k), 0);
        std::vector<double> best(static_cast<std::size_t>(k), -1);
        for (int r = 0; r < n; ++r) {
          int arg = 0;
          for (int c = 1; c < k; ++c)
            if (pm(r, c) > pm(r, arg)) arg = c;
          votes[static_cast<std::size_t>(arg)]++;
          best[static_cast<std::size_t>(arg)] =
              std::max(best[static_cast<std::size_t>(arg)], pm(r, arg));
        }
        int top = 0;
        for (int c = 0; c < k; ++c) top = std::max(top, votes[static_cast<std::size_t>(c)]);
        maj_expect = -1;
        for (int c = 0; c < k; ++c) {
          if (votes[static_cast<std::size_t>(c)] != top) continue;
          if (maj_expect < 0 ||
              best[static_cast<std::size_t>(c)] > best[static_cast<std::size_t>(maj_expect)])
            maj_expect = c;
        }
      }
      if (aggregate_average(pm).first != avg_expect || aggregate_majority(pm) != maj_expect) {
        ok = false;
        detail = "disagreement at case " + std::to_string(t);
      }
    }
    results.push_back({"aggregation oracles", ok, ok ? "10000 cases exact" : detail});
  }

  {  // softmax contract
    bool ok = true;
    for (int t = 0; t < 100 && ok; ++t) {
      Tensor<double> x = detail::random_tensor({5}, rng, 10.0);
      const Tensor<double> p = softmax(x);
      ok = ok && std::abs(p.array().sum() - 1.0) < 1e-12;
      Tensor<double> shifted = x;
      shifted.array() += 123.0;
      const Tensor<double> q = softmax(shifted);
      ok = ok && ((p.array() - q.array()).abs() < 1e-10).all();
    }
    results.push_back({"softmax invariants", ok, "sum 1 within 1e-12, shift-invariant"});
  }

  {  // adam zero-gradient fixed point
    Network<double> net;
    int n = net.add_input({4});
    n = net.add_dense(n, "fc", 3, true);
    net.add_softmax(n);
    net.init_params(7);
    const std::uint64_t before = checkpoint_hash(net);
    AdamState<double> state({}, net.param_shapes());
    std::vector<Tensor<double>> grads = net.zero_grads();
    std::vector<Tensor<double>*> ptrs;
    for (auto& p : net.params()) ptrs.push_back(&p.value);
    for (int i = 0; i < 5; ++i) adam_step(ptrs, grads, state);
    const bool ok = checkpoint_hash(net) == before;
    results.push_back({"adam zero-grad identity", ok, "5 steps, parameters unchanged"});
  }

  {  // checkpoint round-trip
    const GridDecomposition grid = make_grid({16, 16}, {2, 2});
    ArchOptions opts;
    opts.base_width = 4;
    opts.dense_width = 8;
    Network<double> net = build_coherent<double>("vgg9", grid, 3, 2, opts, 11);
    const std::string bytes = serialize_network(net);
    Network<double> copy = build_coherent<double>("vgg9", grid, 3, 2, opts, 12);
    deserialize_network(bytes, copy);
    const bool ok = serialize_network(copy) == bytes;
    results.push_back({"checkpoint round-trip", ok, "serialize/deserialize bit-exact"});
  }

  {  // decomposed vs coherent forward agreement
    const GridDecomposition grid = make_grid({16, 16}, {2, 2});
    ArchOptions opts;
    opts.base_width = 4;
    opts.dense_width = 8;
    std::vector<Network<double>> locals =
        build_local_cnns<double>("vgg9", grid, 4, 1, opts, 21);
    Network<double> dnn = build_aggregator_dnn<double>(grid.n_subimages, 4, 25);
    Network<double> coherent = build_coherent<double>("vgg9", grid, 4, 1, opts, 21);
    bool ok = true;
    for (int t = 0; t < 20 && ok; ++t) {
      const Tensor<double> img = detail::random_tensor({1, 16, 16}, rng);
      const auto [cls, dist] = predict_cnn_dnn(locals, dnn, img, grid);
      const Tensor<double> direct = coherent.forward(img);
      ok = std::memcmp(dist.data(), direct.data(), sizeof(double) * dist.size()) == 0 &&
           cls == argmax_lowest(direct.vec());
    }
    results.push_back({"structural equivalence", ok, "20 inputs bit-exact"});
  }

  return results;
}

}  // namespace gridnet::selfcheck
