#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <random>

#include "gridnet/checkpoint.hpp"
#include "gridnet/data.hpp"
#include "gridnet/strategies.hpp"
#include "testutil.hpp"

using namespace gridnet;

namespace {

// Brute-force re-implementations of the two aggregation rules, written
// directly from their definitions and independent of strategies.hpp.
int oracle_average(const ProbabilityMatrix<double>& pm) {
  const int n = static_cast<int>(pm.rows()), k = static_cast<int>(pm.cols());
  std::vector<double> sum(static_cast<std::size_t>(k), 0.0);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < k; ++c) sum[static_cast<std::size_t>(c)] += pm(r, c);
  for (int c = 0; c < k; ++c) sum[static_cast<std::size_t>(c)] /= n;
  int best = 0;
  for (int c = 1; c < k; ++c)
    if (sum[static_cast<std::size_t>(c)] > sum[static_cast<std::size_t>(best)]) best = c;
  return best;
}

int oracle_majority(const ProbabilityMatrix<double>& pm) {
  const int n = static_cast<int>(pm.rows()), k = static_cast<int>(pm.cols());
  std::vector<int> votes(static_cast<std::size_t>(k), 0);
  std::vector<double> highest(static_cast<std::size_t>(k), -1.0);
  for (int r = 0; r < n; ++r) {
    int arg = 0;
    for (int c = 1; c < k; ++c)
      if (pm(r, c) > pm(r, arg)) arg = c;
    votes[static_cast<std::size_t>(arg)]++;
    if (pm(r, arg) > highest[static_cast<std::size_t>(arg)])
      highest[static_cast<std::size_t>(arg)] = pm(r, arg);
  }
  int top_votes = 0;
  for (int v : votes) top_votes = std::max(top_votes, v);
  int winner = -1;
  for (int c = 0; c < k; ++c) {
    if (votes[static_cast<std::size_t>(c)] != top_votes) continue;
    if (winner < 0 ||
        highest[static_cast<std::size_t>(c)] > highest[static_cast<std::size_t>(winner)])
      winner = c;
  }
  return winner;
}

ProbabilityMatrix<double> random_pm(std::mt19937_64& rng, bool coarse) {
  const int n = 1 + static_cast<int>(rng() % 6), k = 2 + static_cast<int>(rng() % 7);
  ProbabilityMatrix<double> pm(n, k);
  for (int r = 0; r < n; ++r) {
    double sum = 0;
    for (int c = 0; c < k; ++c) {
      // coarse draws produce frequent exact vote and probability ties
      pm(r, c) = coarse ? double(1 + rng() % 4) : uniform(rng, 0.01, 1.0);
      sum += pm(r, c);
    }
    for (int c = 0; c < k; ++c) pm(r, c) /= sum;
  }
  return pm;
}

SynthSpec tiny_spec() {
  SynthSpec spec;
  spec.extents = {16, 16};
  spec.num_classes = 4;
  spec.noise_std = 0.1;
  spec.train_per_class = 12;
  spec.val_per_class = 4;
  spec.seed = 13;
  return spec;
}

ArchOptions tiny_opts() {
  ArchOptions opts;
  opts.base_width = 4;
  opts.dense_width = 8;
  return opts;
}

}  // namespace

TEST_CASE("average aggregation: arithmetic, constant rows, empty error") {
  ProbabilityMatrix<double> pm(2, 2);
  pm << 0.6, 0.4, 0.2, 0.8;
  const auto [cls, dist] = aggregate_average(pm);
  CHECK(cls == 1);
  CHECK(dist(0) == doctest::Approx(0.4));
  CHECK(dist(1) == doctest::Approx(0.6));

  ProbabilityMatrix<double> same(3, 3);
  for (int r = 0; r < 3; ++r) same.row(r) << 0.2, 0.5, 0.3;
  CHECK(aggregate_average(same).first == 1);

  ProbabilityMatrix<double> empty(0, 0);
  CHECK_THROWS_AS(aggregate_average(empty), DimensionError);
  CHECK_THROWS_AS(aggregate_majority(empty), DimensionError);
}

TEST_CASE("majority aggregation: plurality and the stated tie-break") {
  ProbabilityMatrix<double> pm(4, 3);
  pm << 0.8, 0.1, 0.1,   // votes 0
        0.7, 0.2, 0.1,   // votes 0
        0.1, 0.8, 0.1,   // votes 1
        0.1, 0.1, 0.8;   // votes 2
  CHECK(aggregate_majority(pm) == 0);

  // votes tied 2-2 between classes 0 and 1; class-0 voters max 0.9 beats 0.7
  ProbabilityMatrix<double> tie(4, 3);
  tie << 0.9, 0.05, 0.05,
         0.6, 0.3, 0.1,
         0.2, 0.7, 0.1,
         0.3, 0.65, 0.05;
  CHECK(aggregate_majority(tie) == 0);

  // reversed: class-1 voters carry the higher probability
  ProbabilityMatrix<double> tie2(4, 3);
  tie2 << 0.6, 0.3, 0.1,
          0.55, 0.4, 0.05,
          0.05, 0.9, 0.05,
          0.3, 0.6, 0.1;
  CHECK(aggregate_majority(tie2) == 1);

  // residual exact tie: identical votes and identical max probabilities
  ProbabilityMatrix<double> exact(2, 2);
  exact << 0.75, 0.25, 0.25, 0.75;
  CHECK(aggregate_majority(exact) == 0);
}

TEST_CASE("property: 10^4 random matrices match the brute-force oracles exactly") {
  std::mt19937_64 rng(0xa66);
  for (int t = 0; t < 10000; ++t) {
    const ProbabilityMatrix<double> pm = random_pm(rng, t % 2 == 0);
    CHECK(aggregate_average(pm).first == oracle_average(pm));
    CHECK(aggregate_majority(pm) == oracle_majority(pm));
  }
}

TEST_CASE("local_probabilities: rows sum to one and match separate forward calls") {
  const GridDecomposition grid = make_grid({16, 16}, {2, 2});
  auto locals = build_local_cnns<double>("vgg9", grid, 3, 1, tiny_opts(), 3);
  std::mt19937_64 rng(4);
  const Tensor<double> img = testutil::random_tensor({1, 16, 16}, rng);
  const ProbabilityMatrix<double> pm = local_probabilities(locals, img, grid);
  REQUIRE(pm.rows() == 4);
  REQUIRE(pm.cols() == 3);
  const auto cells = extract_subimages(img, grid);
  for (int i = 0; i < 4; ++i) {
    CHECK(std::abs(pm.row(i).sum() - 1.0) < 1e-9);
    const Tensor<double> direct = locals[static_cast<std::size_t>(i)].forward(
        cells[static_cast<std::size_t>(i)]);
    for (Index k = 0; k < 3; ++k) CHECK(pm(i, k) == direct[k]);
  }
}

TEST_CASE("untrained symmetric locals on a zero image give near-uniform rows") {
  const GridDecomposition grid = make_grid({16, 16}, {2, 2});
  auto locals = build_local_cnns<double>("vgg9", grid, 4, 1, tiny_opts(), 5);
  const Tensor<double> zero(Shape{1, 16, 16});
  const ProbabilityMatrix<double> pm = local_probabilities(locals, zero, grid);
  for (int i = 0; i < 4; ++i)
    for (Index k = 0; k < 4; ++k) CHECK(std::abs(pm(i, k) - 0.25) < 0.1);
}

TEST_CASE("train_local_cnns: worker count does not change the result bits") {
  const SynthSpec spec = tiny_spec();
  const auto [train, val] = synth2d<double>(spec);
  const GridDecomposition grid = make_grid({16, 16}, {2, 2});

  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.seed = 21;

  std::vector<std::string> serialized[2];
  std::int64_t comm[2] = {0, 0};
  for (int variant = 0; variant < 2; ++variant) {
    auto locals = build_local_cnns<double>("vgg9", grid, 4, 1, tiny_opts(), cfg.seed);
    TrainConfig c = cfg;
    c.workers = variant == 0 ? 1 : 4;
    const LocalTrainResult r = train_local_cnns(locals, train, grid, c);
    comm[variant] = r.comm_events;
    for (const auto& n : locals) serialized[variant].push_back(serialize_network(n));
  }
  REQUIRE(serialized[0].size() == serialized[1].size());
  for (std::size_t i = 0; i < serialized[0].size(); ++i) {
    CHECK(serialized[0][i] == serialized[1][i]);
  }
  CHECK(comm[0] == 0);  // no communication events during local training
  CHECK(comm[1] == 0);
}

TEST_CASE("train_local_cnns: each local beats chance on the toy quadrant data") {
  double mean_acc = 0;
  int count = 0;
  for (std::uint64_t seed : {100u, 101u, 102u}) {
    SynthSpec spec = tiny_spec();
    spec.train_per_class = 24;
    spec.val_per_class = 12;
    spec.seed = seed;
    auto [train, val] = synth2d<double>(spec);
    normalize(train, val);
    const GridDecomposition grid = make_grid({16, 16}, {2, 2});
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.batch_size = 16;
    cfg.seed = seed;
    cfg.workers = 2;
    ArchOptions opts;
    opts.base_width = 8;
    opts.dense_width = 16;
    auto locals = build_local_cnns<double>("vgg9", grid, 4, 1, opts, cfg.seed);
    train_local_cnns(locals, train, grid, cfg);
    const auto val_cells = subimage_datasets(val, grid);
    for (int i = 0; i < grid.n_subimages; ++i) {
      std::int64_t correct = 0;
      for (std::size_t s = 0; s < val.size(); ++s) {
        const auto p = locals[static_cast<std::size_t>(i)].forward(
            val_cells[static_cast<std::size_t>(i)][s]);
        if (argmax_lowest(p.vec()) == val.labels[s]) ++correct;
      }
      mean_acc += double(correct) / double(val.size());
      ++count;
    }
  }
  mean_acc /= count;
  CHECK(mean_acc > 0.25);  // strictly above 1/K, seed-averaged
}

TEST_CASE("train_aggregator: locals stay frozen, oracle locals give 100% train accuracy") {
  SynthSpec spec = tiny_spec();
  spec.train_per_class = 16;
  auto [train, val] = synth2d<double>(spec);
  const GridDecomposition grid = make_grid({16, 16}, {2, 2});
  auto locals = build_local_cnns<double>("vgg9", grid, 4, 1, tiny_opts(), 31);

  std::vector<std::uint64_t> hashes;
  for (const auto& n : locals) hashes.push_back(checkpoint_hash(n));

  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.seed = 31;
  Network<double> dnn = build_aggregator_dnn<double>(4, 4, 35);
  train_aggregator(dnn, locals, train, grid, cfg);
  for (std::size_t i = 0; i < locals.size(); ++i) {
    CHECK(checkpoint_hash(locals[i]) == hashes[i]);  // freeze contract
  }

  // oracle rows: every local outputs the one-hot of the true label
  std::vector<Tensor<double>> inputs;
  for (std::size_t s = 0; s < train.size(); ++s) {
    ProbabilityMatrix<double> pm = ProbabilityMatrix<double>::Zero(4, 4);
    for (int r = 0; r < 4; ++r) pm(r, train.labels[s]) = 1.0;
    inputs.push_back(flatten_probabilities(pm));
  }
  Network<double> dnn2 = build_aggregator_dnn<double>(4, 4, 36);
  TrainConfig cfg2 = cfg;
  cfg2.epochs = 5;
  train_network(dnn2, inputs, train.labels, cfg2, cfg2.seed);
  std::int64_t correct = 0;
  for (std::size_t s = 0; s < inputs.size(); ++s) {
    if (argmax_lowest(dnn2.forward(inputs[s]).vec()) == train.labels[s]) ++correct;
  }
  CHECK(correct == static_cast<std::int64_t>(inputs.size()));
}

TEST_CASE("flattening order is row-major over (cell, class)") {
  ProbabilityMatrix<double> pm(2, 3);
  pm << 1, 2, 3, 4, 5, 6;
  const Tensor<double> flat = flatten_probabilities(pm);
  for (Index i = 0; i < 6; ++i) CHECK(flat[i] == double(i + 1));
}

TEST_CASE("predict_cnn_dnn: distribution sums to one and repeats deterministically") {
  const GridDecomposition grid = make_grid({16, 16}, {2, 2});
  auto locals = build_local_cnns<double>("vgg9", grid, 3, 1, tiny_opts(), 41);
  Network<double> dnn = build_aggregator_dnn<double>(4, 3, 45);
  std::mt19937_64 rng(46);
  const Tensor<double> img = testutil::random_tensor({1, 16, 16}, rng);
  const auto [c1, d1] = predict_cnn_dnn(locals, dnn, img, grid);
  const auto [c2, d2] = predict_cnn_dnn(locals, dnn, img, grid);
  CHECK(std::abs(d1.array().sum() - 1.0) < 1e-12);
  CHECK(c1 == c2);
  CHECK(std::memcmp(d1.data(), d2.data(), sizeof(double) * static_cast<std::size_t>(d1.size())) == 0);
}

TEST_CASE("train_coherent: loss falls and nearly all parameters receive gradient") {
  SynthSpec spec = tiny_spec();
  spec.train_per_class = 16;
  double first = 0, last = 0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    SynthSpec s = spec;
    s.seed = seed;
    auto [train, val] = synth2d<double>(s);
    normalize(train, val);
    const GridDecomposition grid = make_grid({16, 16}, {2, 2});
    Network<double> net = build_coherent<double>("vgg9", grid, 4, 1, tiny_opts(), seed);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 16;
    cfg.seed = seed;
    const PhaseMetrics m = train_coherent(net, train, cfg);
    first += m.loss_curve.front();
    last += m.loss_curve.back();
  }
  CHECK(last < first);  // seed-averaged decrease over the first epochs

  // gradient reaches (nearly) every parameter tensor on a random batch
  auto [train, val] = synth2d<double>(spec);
  const GridDecomposition grid = make_grid({16, 16}, {2, 2});
  Network<double> net = build_coherent<double>("vgg9", grid, 4, 1, tiny_opts(), 9);
  std::vector<Tensor<double>> grads = net.zero_grads();
  Network<double>::Tape tape;
  for (int s = 0; s < 8; ++s) {
    net.forward(train.images[static_cast<std::size_t>(s * 5)], &tape);
    net.backward_cross_entropy(tape, train.labels[static_cast<std::size_t>(s * 5)], grads);
  }
  int nonzero = 0;
  for (const auto& g : grads) {
    if ((g.array() != 0.0).any()) ++nonzero;
  }
  CHECK(double(nonzero) >= 0.99 * double(grads.size()));
}

TEST_CASE("train_coherent: same seed reproduces checkpoints bit-identically") {
  SynthSpec spec = tiny_spec();
  auto [train, val] = synth2d<double>(spec);
  const GridDecomposition grid = make_grid({16, 16}, {2, 2});
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.seed = 55;
  std::string bytes[2];
  for (int r = 0; r < 2; ++r) {
    Network<double> net = build_coherent<double>("vgg9", grid, 4, 1, tiny_opts(), cfg.seed);
    train_coherent(net, train, cfg);
    bytes[r] = serialize_network(net);
  }
  CHECK(bytes[0] == bytes[1]);
}

TEST_CASE("transfer_pipeline: zero fine-tune epochs keep pretrained weights bit-exactly") {
  SynthSpec spec = tiny_spec();
  auto [train, val] = synth2d<double>(spec);
  const GridDecomposition grid = make_grid({16, 16}, {2, 2});
  TrainConfig cfg;
  cfg.epochs = 0;  // no fine-tuning
  cfg.pretrain_epochs = 2;
  cfg.batch_size = 8;
  cfg.seed = 61;
  const TransferResult<double> result =
      transfer_pipeline<double>("vgg9", grid, 4, 1, tiny_opts(), train, cfg);

  for (std::size_t i = 0; i < result.pretrained_locals.size(); ++i) {
    const std::string prefix = "local" + std::to_string(i) + "/";
    for (const auto& src : result.pretrained_locals[i].params()) {
      const int ix = result.model.find_param(prefix + src.name);
      REQUIRE(ix >= 0);
      const auto& dst = result.model.params()[static_cast<std::size_t>(ix)].value;
      CHECK(std::memcmp(src.value.data(), dst.data(),
                        sizeof(double) * static_cast<std::size_t>(src.value.size())) == 0);
    }
  }
  REQUIRE(result.metrics.phases.size() == 2);
  CHECK(result.metrics.phases[0].name == "pretrain");
  CHECK(result.metrics.phases[1].name == "finetune");
  CHECK(result.metrics.phases[0].wall_s > 0);  // phase wall-clock reported separately
}

TEST_CASE("evaluate: perfect oracle, constant predictor, recount oracle") {
  SynthSpec spec = tiny_spec();
  auto [train, val] = synth2d<double>(spec);

  Predictor<double> oracle = [&, i = std::size_t{0}](const Tensor<double>&) mutable {
    return val.labels[i++ % val.labels.size()];
  };
  CHECK(evaluate_accuracy(oracle, val) == 1.0);

  Predictor<double> constant = [](const Tensor<double>&) { return 0; };
  CHECK(evaluate_accuracy(constant, val) == doctest::Approx(0.25));  // balanced split

  const GridDecomposition grid = make_grid({16, 16}, {2, 2});
  auto locals = build_local_cnns<double>("vgg9", grid, 4, 1, tiny_opts(), 71);
  Predictor<double> avg = average_predictor(locals, grid);
  std::int64_t correct = 0;
  for (std::size_t s = 0; s < val.size(); ++s) {
    if (avg(val.images[s]) == val.labels[s]) ++correct;
  }
  CHECK(evaluate_accuracy(avg, val) == doctest::Approx(double(correct) / double(val.size())));

  Dataset<double> empty;
  empty.num_classes = 4;
  CHECK_THROWS_AS(evaluate_accuracy(constant, empty), ConfigError);
}

TEST_CASE("worker pool reports the failing subdomain") {
  WorkerPool pool(2);
  CHECK_THROWS_WITH_AS(
      pool.run(3, [](int i) { if (i == 1) throw std::runtime_error("boom"); }),
      doctest::Contains("subdomain 1"), PipelineError);
}
