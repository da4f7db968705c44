#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <random>

#include "gridnet/data.hpp"
#include "gridnet/models.hpp"
#include "gridnet/strategies.hpp"
#include "testutil.hpp"

using namespace gridnet;

namespace {

// Likelihood-ratio oracle for the synthetic generative model: with isotropic
// Gaussian noise and equal priors, the Bayes decision is the nearest
// noise-free class template in L2.
int bayes_predict(const SynthSpec& spec, const Tensor<double>& img) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int k = 0; k < spec.num_classes; ++k) {
    const Tensor<double> tmpl = synth_class_template<double>(spec, k, {});
    const double d = (img.array() - tmpl.array()).square().sum();
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("synth2d: zero noise with jitter disabled gives identical images per class") {
  SynthSpec spec;
  spec.extents = {16, 16};
  spec.num_classes = 4;
  spec.noise_std = 0.0;
  spec.jitter = 0;
  spec.train_per_class = 5;
  spec.val_per_class = 2;
  const auto [train, val] = synth2d<double>(spec);
  REQUIRE(train.size() == 20);
  REQUIRE(val.size() == 8);
  for (int k = 0; k < 4; ++k) {
    const auto& first = train.images[static_cast<std::size_t>(k * 5)];
    for (int s = 1; s < 5; ++s) {
      const auto& other = train.images[static_cast<std::size_t>(k * 5 + s)];
      CHECK(std::memcmp(first.data(), other.data(),
                        sizeof(double) * static_cast<std::size_t>(first.size())) == 0);
    }
  }
}

TEST_CASE("synth generators are seed-deterministic, including jitter") {
  SynthSpec spec;
  spec.extents = {16, 16};
  spec.num_classes = 3;
  spec.noise_std = 0.2;
  spec.jitter = 2;
  spec.train_per_class = 4;
  spec.val_per_class = 2;
  spec.seed = 77;
  const auto [a_train, a_val] = synth2d<double>(spec);
  const auto [b_train, b_val] = synth2d<double>(spec);
  for (std::size_t i = 0; i < a_train.size(); ++i) {
    CHECK(std::memcmp(a_train.images[i].data(), b_train.images[i].data(),
                      sizeof(double) * static_cast<std::size_t>(a_train.images[i].size())) == 0);
  }
  spec.seed = 78;
  const auto [c_train, c_val] = synth2d<double>(spec);
  CHECK(std::memcmp(a_train.images[0].data(), c_train.images[0].data(),
                    sizeof(double) * static_cast<std::size_t>(a_train.images[0].size())) != 0);
}

TEST_CASE("synth2d rejects duplicate pattern rows") {
  SynthSpec spec;
  spec.extents = {16, 16};
  spec.num_classes = 2;
  spec.patterns = {0b0011, 0b0011};
  CHECK_THROWS_AS(synth2d<double>(spec), ConfigError);
}

TEST_CASE("bayes oracle exceeds 99% on the acceptance-scale task and bounds a trained cnn") {
  SynthSpec spec;
  spec.extents = {32, 32};
  spec.num_classes = 4;
  spec.noise_std = 0.1;
  spec.train_per_class = 24;
  spec.val_per_class = 24;
  spec.seed = 5;
  auto [train, val] = synth2d<double>(spec);

  std::int64_t correct = 0;
  for (std::size_t s = 0; s < val.size(); ++s) {
    if (bayes_predict(spec, val.images[s]) == val.labels[s]) ++correct;
  }
  const double oracle_acc = double(correct) / double(val.size());
  CHECK(oracle_acc > 0.99);

  // a (briefly) trained global CNN cannot beat the Bayes bound
  Dataset<double> norm_train = train, norm_val = val;
  normalize(norm_train, norm_val);
  ArchOptions opts;
  opts.base_width = 4;
  opts.dense_width = 8;
  Network<double> net = build_vgg9<double>({1, 32, 32}, 4, opts);
  net.init_params(6);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.seed = 6;
  train_network(net, norm_train.images, norm_train.labels, cfg, cfg.seed);
  const double net_acc = evaluate_accuracy(network_predictor(net), norm_val);
  CHECK(net_acc <= oracle_acc);
}

TEST_CASE("synth3d: octant stand-in mirrors the 2x2x1 grid arithmetic and is deterministic") {
  SynthSpec spec;
  spec.extents = {32, 32, 16};
  spec.num_classes = 2;
  spec.noise_std = 0.1;
  spec.train_per_class = 3;
  spec.val_per_class = 2;
  spec.seed = 9;
  const auto [train, val] = synth3d<double>(spec);
  CHECK(train.images[0].shape() == Shape{1, 32, 32, 16});

  const GridDecomposition grid = make_grid({32, 32, 16}, {2, 2, 1});
  CHECK(grid.cell_extent(0) == Shape{16, 16, 16});

  const auto [again, again_val] = synth3d<double>(spec);
  CHECK(std::memcmp(train.images[0].data(), again.images[0].data(),
                    sizeof(double) * static_cast<std::size_t>(train.images[0].size())) == 0);
}

TEST_CASE("synth3d: a scaled 3d vgg9 learns the K=2 octant task") {
  double acc_sum = 0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    SynthSpec spec;
    spec.extents = {32, 32, 16};
    spec.num_classes = 2;
    spec.noise_std = 0.1;
    spec.train_per_class = 12;
    spec.val_per_class = 8;
    spec.seed = seed;
    auto [train, val] = synth3d<double>(spec);
    normalize(train, val);
    ArchOptions opts;
    opts.base_width = 4;
    opts.dense_width = 8;
    Network<double> net = build_vgg9<double>({1, 32, 32, 16}, 2, opts);
    net.init_params(seed);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 8;
    cfg.adam.lr = 3e-3;
    cfg.seed = seed;
    train_network(net, train.images, train.labels, cfg, cfg.seed);
    acc_sum += evaluate_accuracy(network_predictor(net), val);
  }
  CHECK(acc_sum / 3.0 > 0.9);
}

TEST_CASE("split: the 3670-sample 80% case and its contracts") {
  Dataset<double> ds;
  ds.num_classes = 5;
  for (int k = 0; k < 5; ++k) {
    for (int s = 0; s < 734; ++s) {
      ds.images.push_back(Tensor<double>::constant({1, 2, 2}, double(k)));
      ds.labels.push_back(k);
    }
  }
  REQUIRE(ds.size() == 3670);
  const auto [train, val] = split(ds, 0.8, 3);
  CHECK(train.size() == 2936);
  CHECK(val.size() == 734);

  // stratified within +-1 per class
  std::vector<int> counts(5, 0);
  for (int label : train.labels) counts[static_cast<std::size_t>(label)]++;
  for (int c : counts) CHECK(std::abs(c - 2936 / 5) <= 1);

  CHECK_THROWS_AS(split(ds, 1.0, 3), ConfigError);
  CHECK_THROWS_AS(split(ds, 0.0, 3), ConfigError);

  const auto [t2, v2] = split(ds, 0.8, 3);
  CHECK(t2.labels == train.labels);
  for (std::size_t i = 0; i < t2.size(); ++i) {
    CHECK(std::memcmp(t2.images[i].data(), train.images[i].data(),
                      sizeof(double) * 4) == 0);
  }
}

TEST_CASE("normalize: train statistics, applied to val, zero-variance guard") {
  std::mt19937_64 rng(11);
  Dataset<double> train, val;
  train.num_classes = val.num_classes = 2;
  for (int s = 0; s < 40; ++s) {
    Tensor<double> img(Shape{2, 4, 4});
    for (Index i = 0; i < 16; ++i) img[i] = uniform(rng, 0, 1) + 3.0;  // channel 0
    for (Index i = 16; i < 32; ++i) img[i] = 0.5;                      // constant channel
    train.images.push_back(img);
    train.labels.push_back(s % 2);
    // val drawn from a shifted distribution: must use train stats, not its own
    Tensor<double> vimg(Shape{2, 4, 4});
    for (Index i = 0; i < 16; ++i) vimg[i] = uniform(rng, 0, 1) + 8.0;
    for (Index i = 16; i < 32; ++i) vimg[i] = 0.5;
    val.images.push_back(vimg);
    val.labels.push_back(s % 2);
  }
  normalize(train, val);

  double mean0 = 0, var0 = 0;
  for (const auto& img : train.images)
    for (Index i = 0; i < 16; ++i) mean0 += img[i];
  mean0 /= double(train.size() * 16);
  CHECK(std::abs(mean0) < 1e-6);
  for (const auto& img : train.images)
    for (Index i = 0; i < 16; ++i) var0 += (img[i] - mean0) * (img[i] - mean0);
  CHECK(std::abs(std::sqrt(var0 / double(train.size() * 16)) - 1.0) < 1e-3);

  // val keeps its shift: mean approx (8.5 - train_mean)/train_std, far from 0
  double vmean = 0;
  for (const auto& img : val.images)
    for (Index i = 0; i < 16; ++i) vmean += img[i];
  vmean /= double(val.size() * 16);
  CHECK(vmean > 1.0);
  CHECK(val.channel_mean == train.channel_mean);

  // constant channel stayed finite through the std floor
  for (const auto& img : val.images) CHECK(img.all_finite());
}
