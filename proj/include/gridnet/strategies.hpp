#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "gridnet/adam.hpp"
#include "gridnet/data.hpp"
#include "gridnet/decomp.hpp"
#include "gridnet/models.hpp"
#include "gridnet/network.hpp"
#include "gridnet/rng.hpp"

namespace gridnet {

// N rows of local class probabilities, one row per grid cell in cell order.
template <typename Scalar>
using ProbabilityMatrix = MatrixRM<Scalar>;

struct TrainConfig {
  int epochs = 20;
  int batch_size = 32;
  AdamConfig adam;
  std::uint64_t seed = 0;
  int workers = 1;
  bool deterministic = true;  // recorded in reports; training is seed-driven
                              // and bit-reproducible either way
  int pretrain_epochs = 150;  // local pretraining budget of the transfer pipeline
};

struct PhaseMetrics {
  std::string name;
  int epochs = 0;
  double wall_s = 0.0;
  std::vector<double> loss_curve;  // mean sample loss per epoch
  std::int64_t samples_seen = 0;
};

struct Metrics {
  std::string strategy;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double wall_s = 0.0;
  std::int64_t samples_seen = 0;
  std::int64_t comm_events = 0;
  std::vector<PhaseMetrics> phases;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace detail

// First maximum wins: ties break toward the lowest class index.
template <typename Derived>
int argmax_lowest(const Eigen::DenseBase<Derived>& v) {
  int best = 0;
  for (Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = static_cast<int>(i);
  }
  return best;
}

// --- communication-free aggregation baselines ---

// Mean accumulates in row order, then divides once; the reduction order is
// part of the contract so independent recomputation matches bit-for-bit.
template <typename Scalar>
std::pair<int, Eigen::RowVector<Scalar, Eigen::Dynamic>> aggregate_average(
    const ProbabilityMatrix<Scalar>& pm) {
  if (pm.rows() == 0 || pm.cols() == 0) {
    throw DimensionError("aggregate_average: empty probability matrix");
  }
  Eigen::RowVector<Scalar, Eigen::Dynamic> mean =
      Eigen::RowVector<Scalar, Eigen::Dynamic>::Zero(pm.cols());
  for (Index r = 0; r < pm.rows(); ++r) mean += pm.row(r);
  mean /= Scalar(pm.rows());
  return {argmax_lowest(mean), std::move(mean)};
}

// Plurality of row argmaxes. Vote ties go to the tied class with the highest
// single probability among its voters; residual exact ties to the lowest
// class index.
template <typename Scalar>
int aggregate_majority(const ProbabilityMatrix<Scalar>& pm) {
  if (pm.rows() == 0 || pm.cols() == 0) {
    throw DimensionError("aggregate_majority: empty probability matrix");
  }
  const int k = static_cast<int>(pm.cols());
  std::vector<int> votes(static_cast<std::size_t>(k), 0);
  std::vector<Scalar> voter_max(static_cast<std::size_t>(k),
                                -std::numeric_limits<Scalar>::infinity());
  for (Index r = 0; r < pm.rows(); ++r) {
    const int choice = argmax_lowest(pm.row(r));
    votes[static_cast<std::size_t>(choice)] += 1;
    voter_max[static_cast<std::size_t>(choice)] =
        std::max(voter_max[static_cast<std::size_t>(choice)], pm(r, choice));
  }
  const int top = *std::max_element(votes.begin(), votes.end());
  int winner = -1;
  for (int c = 0; c < k; ++c) {
    if (votes[static_cast<std::size_t>(c)] != top) continue;
    if (winner < 0 || voter_max[static_cast<std::size_t>(c)] >
                          voter_max[static_cast<std::size_t>(winner)]) {
      winner = c;
    }
  }
  return winner;
}

// --- local probability evaluation ---

template <typename Scalar>
ProbabilityMatrix<Scalar> local_probabilities(const std::vector<Network<Scalar>>& locals,
                                              const Tensor<Scalar>& image,
                                              const GridDecomposition& grid) {
  if (static_cast<int>(locals.size()) != grid.n_subimages) {
    throw DimensionError("local_probabilities: " + std::to_string(locals.size()) +
                         " locals for " + std::to_string(grid.n_subimages) + " cells");
  }
  const std::vector<Tensor<Scalar>> cells = extract_subimages(image, grid);
  const int k = locals[0].num_classes();
  ProbabilityMatrix<Scalar> pm(grid.n_subimages, k);
  for (int i = 0; i < grid.n_subimages; ++i) {
    const Tensor<Scalar> probs =
        locals[static_cast<std::size_t>(i)].forward(cells[static_cast<std::size_t>(i)]);
    pm.row(i) = probs.vec();
  }
  return pm;
}

// Row-major flattening (cell, class) matching the aggregator's input slots.
template <typename Scalar>
Tensor<Scalar> flatten_probabilities(const ProbabilityMatrix<Scalar>& pm) {
  Tensor<Scalar> flat(Shape{pm.rows() * pm.cols()});
  Eigen::Map<ProbabilityMatrix<Scalar>>(flat.data(), pm.rows(), pm.cols()) = pm;
  return flat;
}

// --- minibatch Adam training loop ---

// Shared by every strategy. Samples are visited in a seed-determined order;
// batch gradients accumulate in fixed sample order, so results are
// bit-reproducible for a given seed.
template <typename Scalar>
PhaseMetrics train_network(Network<Scalar>& net, const std::vector<Tensor<Scalar>>& inputs,
                           const std::vector<int>& labels, const TrainConfig& cfg,
                           std::uint64_t seed, const std::string& phase_name = "train") {
  if (inputs.size() != labels.size()) {
    throw DimensionError("train: " + std::to_string(inputs.size()) + " inputs vs " +
                         std::to_string(labels.size()) + " labels");
  }
  if (inputs.empty()) throw ConfigError("train: empty training set");

  const auto t0 = detail::Clock::now();
  PhaseMetrics metrics;
  metrics.name = phase_name;
  metrics.epochs = cfg.epochs;

  AdamState<Scalar> state(cfg.adam, net.param_shapes());
  std::vector<Tensor<Scalar>> grads = net.zero_grads();
  std::vector<Tensor<Scalar>*> param_ptrs;
  for (auto& p : net.params()) param_ptrs.push_back(&p.value);

  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, 0x7a11));

  typename Network<Scalar>::Tape tape;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_indices(order, rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      for (auto& g : grads) g.set_zero();
      for (std::size_t s = start; s < stop; ++s) {
        net.forward(inputs[order[s]], &tape);
        epoch_loss += net.backward_cross_entropy(tape, labels[order[s]], grads);
      }
      const Scalar inv = Scalar(1) / Scalar(stop - start);
      for (auto& g : grads) g.array() *= inv;
      adam_step(param_ptrs, grads, state);
      metrics.samples_seen += static_cast<std::int64_t>(stop - start);
    }
    metrics.loss_curve.push_back(epoch_loss / double(order.size()));
  }
  metrics.wall_s = detail::seconds_since(t0);
  return metrics;
}

// --- model-parallel local training ---

// Runs `tasks` over a fixed-size thread pool. Tasks own disjoint state;
// `comm_events` counts cross-task data exchanges, which local training
// never performs.
class WorkerPool {
 public:
  explicit WorkerPool(int workers) : workers_(std::max(1, workers)) {}

  void run(int tasks, const std::function<void(int)>& fn) {
    std::atomic<int> next{0};
    std::vector<std::string> errors(static_cast<std::size_t>(tasks));
    const int n_threads = std::min(workers_, tasks);
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(n_threads));
    for (int w = 0; w < n_threads; ++w) {
      threads.emplace_back([&] {
        for (;;) {
          const int i = next.fetch_add(1);
          if (i >= tasks) return;
          try {
            fn(i);
          } catch (const std::exception& e) {
            errors[static_cast<std::size_t>(i)] = e.what();
          }
        }
      });
    }
    for (auto& t : threads) t.join();
    for (int i = 0; i < tasks; ++i) {
      if (!errors[static_cast<std::size_t>(i)].empty()) {
        throw PipelineError("subdomain " + std::to_string(i) + ": " +
                            errors[static_cast<std::size_t>(i)]);
      }
    }
  }

  void record_communication() { comm_events_.fetch_add(1); }
  std::int64_t comm_events() const { return comm_events_.load(); }

 private:
  int workers_;
  std::atomic<std::int64_t> comm_events_{0};
};

struct LocalTrainResult {
  std::vector<PhaseMetrics> per_local;
  double wall_s = 0.0;
  std::int64_t comm_events = 0;
};

// Per-cell subimage views of a dataset, extracted once and shared read-only.
template <typename Scalar>
std::vector<std::vector<Tensor<Scalar>>> subimage_datasets(const Dataset<Scalar>& ds,
                                                           const GridDecomposition& grid) {
  std::vector<std::vector<Tensor<Scalar>>> per_cell(
      static_cast<std::size_t>(grid.n_subimages));
  for (auto& v : per_cell) v.reserve(ds.images.size());
  for (const auto& image : ds.images) {
    std::vector<Tensor<Scalar>> cells = extract_subimages(image, grid);
    for (int i = 0; i < grid.n_subimages; ++i) {
      per_cell[static_cast<std::size_t>(i)].push_back(std::move(cells[static_cast<std::size_t>(i)]));
    }
  }
  return per_cell;
}

// Trains each local on (its subimage, global label) pairs, in parallel and
// with no communication between subdomains. Local i trains with seed
// cfg.seed + i regardless of worker count, so checkpoints are bit-identical
// for any pool size.
template <typename Scalar>
LocalTrainResult train_local_cnns(std::vector<Network<Scalar>>& locals,
                                  const Dataset<Scalar>& train_set,
                                  const GridDecomposition& grid, const TrainConfig& cfg,
                                  int epochs_override = 0) {
  if (static_cast<int>(locals.size()) != grid.n_subimages) {
    throw DimensionError("train_local_cnns: " + std::to_string(locals.size()) +
                         " locals for " + std::to_string(grid.n_subimages) + " cells");
  }
  const auto t0 = detail::Clock::now();
  const std::vector<std::vector<Tensor<Scalar>>> per_cell = subimage_datasets(train_set, grid);

  TrainConfig task_cfg = cfg;
  if (epochs_override > 0) task_cfg.epochs = epochs_override;

  LocalTrainResult result;
  result.per_local.resize(locals.size());
  WorkerPool pool(cfg.workers);
  pool.run(grid.n_subimages, [&](int i) {
    result.per_local[static_cast<std::size_t>(i)] = train_network(
        locals[static_cast<std::size_t>(i)], per_cell[static_cast<std::size_t>(i)],
        train_set.labels, task_cfg, cfg.seed + static_cast<std::uint64_t>(i),
        "local" + std::to_string(i));
  });
  result.comm_events = pool.comm_events();
  result.wall_s = detail::seconds_since(t0);
  return result;
}

// Cached aggregator inputs: the locals are frozen, so each sample's
// probability matrix is computed once.
template <typename Scalar>
std::vector<Tensor<Scalar>> probability_inputs(const std::vector<Network<Scalar>>& locals,
                                               const Dataset<Scalar>& ds,
                                               const GridDecomposition& grid) {
  std::vector<Tensor<Scalar>> flats;
  flats.reserve(ds.images.size());
  for (const auto& image : ds.images) {
    flats.push_back(flatten_probabilities(local_probabilities(locals, image, grid)));
  }
  return flats;
}

// Trains the aggregator on (flattened probability matrix, label) pairs.
// `locals` is const: no gradient ever reaches the local CNNs.
template <typename Scalar>
PhaseMetrics train_aggregator(Network<Scalar>& dnn, const std::vector<Network<Scalar>>& locals,
                              const Dataset<Scalar>& train_set, const GridDecomposition& grid,
                              const TrainConfig& cfg) {
  const std::vector<Tensor<Scalar>> inputs = probability_inputs(locals, train_set, grid);
  return train_network(dnn, inputs, train_set.labels, cfg,
                       cfg.seed + static_cast<std::uint64_t>(grid.n_subimages), "aggregator");
}

template <typename Scalar>
std::pair<int, Tensor<Scalar>> predict_cnn_dnn(const std::vector<Network<Scalar>>& locals,
                                               const Network<Scalar>& dnn,
                                               const Tensor<Scalar>& image,
                                               const GridDecomposition& grid) {
  const ProbabilityMatrix<Scalar> pm = local_probabilities(locals, image, grid);
  const Tensor<Scalar> dist = dnn.forward(flatten_probabilities(pm));
  return {argmax_lowest(dist.vec()), dist};
}

template <typename Scalar>
PhaseMetrics train_coherent(Network<Scalar>& coherent, const Dataset<Scalar>& train_set,
                            const TrainConfig& cfg) {
  return train_network(coherent, train_set.images, train_set.labels, cfg, cfg.seed, "coherent");
}

// --- evaluation ---

template <typename Scalar>
using Predictor = std::function<int(const Tensor<Scalar>&)>;

template <typename Scalar>
double evaluate_accuracy(const Predictor<Scalar>& predict, const Dataset<Scalar>& ds) {
  if (ds.images.empty()) throw ConfigError("evaluate: empty split");
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    if (predict(ds.images[i]) == ds.labels[i]) ++correct;
  }
  return double(correct) / double(ds.images.size());
}

template <typename Scalar>
Predictor<Scalar> network_predictor(const Network<Scalar>& net) {
  return [&net](const Tensor<Scalar>& image) {
    return argmax_lowest(net.forward(image).vec());
  };
}

template <typename Scalar>
Predictor<Scalar> cnn_dnn_predictor(const std::vector<Network<Scalar>>& locals,
                                    const Network<Scalar>& dnn, const GridDecomposition& grid) {
  return [&locals, &dnn, &grid](const Tensor<Scalar>& image) {
    return predict_cnn_dnn(locals, dnn, image, grid).first;
  };
}

template <typename Scalar>
Predictor<Scalar> average_predictor(const std::vector<Network<Scalar>>& locals,
                                    const GridDecomposition& grid) {
  return [&locals, &grid](const Tensor<Scalar>& image) {
    return aggregate_average(local_probabilities(locals, image, grid)).first;
  };
}

template <typename Scalar>
Predictor<Scalar> majority_predictor(const std::vector<Network<Scalar>>& locals,
                                     const GridDecomposition& grid) {
  return [&locals, &grid](const Tensor<Scalar>& image) {
    return aggregate_majority(local_probabilities(locals, image, grid));
  };
}

// --- transfer learning pipeline ---

template <typename Scalar>
struct TransferResult {
  Network<Scalar> model;
  std::vector<Network<Scalar>> pretrained_locals;
  Metrics metrics;  // phases: "pretrain" (parallel wall-clock) and "finetune"
};

// Pretrain the locals in parallel, transplant their weights into a fresh
// coherent model, then fine-tune end to end on the global labels.
template <typename Scalar>
TransferResult<Scalar> transfer_pipeline(const std::string& family,
                                         const GridDecomposition& grid, int num_classes,
                                         Index channels, const ArchOptions& opts,
                                         const Dataset<Scalar>& train_set,
                                         const TrainConfig& cfg) {
  TransferResult<Scalar> result;
  result.metrics.strategy = "transfer";

  result.pretrained_locals = build_local_cnns<Scalar>(family, grid, num_classes, channels,
                                                      opts, cfg.seed);
  LocalTrainResult pre =
      train_local_cnns(result.pretrained_locals, train_set, grid, cfg, cfg.pretrain_epochs);
  PhaseMetrics pretrain;
  pretrain.name = "pretrain";
  pretrain.epochs = cfg.pretrain_epochs;
  pretrain.wall_s = pre.wall_s;
  for (const auto& m : pre.per_local) pretrain.samples_seen += m.samples_seen;
  if (!pre.per_local.empty()) pretrain.loss_curve = pre.per_local[0].loss_curve;
  result.metrics.comm_events = pre.comm_events;

  result.model = build_coherent<Scalar>(family, grid, num_classes, channels, opts, cfg.seed);
  transplant_weights(result.pretrained_locals, result.model);

  PhaseMetrics finetune;
  if (cfg.epochs > 0) {
    finetune = train_coherent(result.model, train_set, cfg);
  }
  finetune.name = "finetune";
  finetune.epochs = cfg.epochs;

  result.metrics.phases = {std::move(pretrain), std::move(finetune)};
  for (const auto& ph : result.metrics.phases) {
    result.metrics.wall_s += ph.wall_s;
    result.metrics.samples_seen += ph.samples_seen;
  }
  return result;
}

}  // namespace gridnet
