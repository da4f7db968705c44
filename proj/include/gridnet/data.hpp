#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gridnet/errors.hpp"
#include "gridnet/rng.hpp"
#include "gridnet/tensor.hpp"

namespace gridnet {

template <typename Scalar>
struct Dataset {
  std::vector<Tensor<Scalar>> images;  // each {C,H,W} or {C,H,W,D}
  std::vector<int> labels;
  int num_classes = 0;
  std::string split;  // "train" | "val"
  // Train-split standardization statistics, filled by normalize().
  std::vector<double> channel_mean, channel_std;

  std::size_t size() const { return images.size(); }
};

// Synthetic stand-in with spatially distributed class signal: each class
// lights a fixed subset of image regions (quadrants in 2D, octants in 3D),
// so no single grid cell determines the label on its own.
struct SynthSpec {
  Shape extents;                        // {H,W} or {H,W,D}
  int num_classes = 4;
  int channels = 1;
  std::vector<std::uint32_t> patterns;  // per-class region bitmask; empty -> defaults
  std::vector<double> intensities;      // per-class blob height; empty -> 1.0
  double noise_std = 0.1;
  int jitter = 0;                       // max blob offset in pixels
  int train_per_class = 100;
  int val_per_class = 25;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::vector<std::uint32_t> default_patterns(int k, int regions) {
  // Pairs of regions first: single regions stay ambiguous to 2+ classes,
  // which is what makes aggregation across cells non-trivial.
  std::vector<std::uint32_t> order;
  if (regions == 4) {
    order = {0b0011, 0b0101, 0b1010, 0b1100, 0b0110, 0b1001,
             0b0001, 0b0010, 0b0100, 0b1000,
             0b0111, 0b1011, 0b1101, 0b1110, 0b1111};
  } else {
    order = {0x0F, 0xF0, 0x33, 0xCC, 0x55, 0xAA, 0x3C, 0xC3, 0x69, 0x96};
    for (std::uint32_t m = 1; m < 256 && order.size() < 255; ++m) {
      if (std::find(order.begin(), order.end(), m) == order.end()) order.push_back(m);
    }
  }
  if (k > static_cast<int>(order.size())) {
    throw ConfigError("synth: no default pattern table for K=" + std::to_string(k));
  }
  return {order.begin(), order.begin() + k};
}

inline void validate_synth(const SynthSpec& spec, int sdims) {
  if (static_cast<int>(spec.extents.size()) != sdims) {
    throw ConfigError("synth: expected " + std::to_string(sdims) + " extents, got " +
                      shape_str(spec.extents));
  }
  for (Index e : spec.extents) {
    if (e < 8) throw ConfigError("synth: extents must be >= 8, got " + shape_str(spec.extents));
  }
  const int regions = sdims == 2 ? 4 : 8;
  if (spec.num_classes < 2 || spec.num_classes > (1 << regions)) {
    throw ConfigError("synth: K must be in [2, 2^" + std::to_string(regions) + "]");
  }
  if (spec.noise_std < 0) throw ConfigError("synth: noise std must be >= 0");
  if (spec.train_per_class < 1 || spec.val_per_class < 1) {
    throw ConfigError("synth: samples per class must be >= 1");
  }
}

inline std::vector<std::uint32_t> resolve_patterns(const SynthSpec& spec, int regions) {
  std::vector<std::uint32_t> patterns =
      spec.patterns.empty() ? default_patterns(spec.num_classes, regions) : spec.patterns;
  if (static_cast<int>(patterns.size()) != spec.num_classes) {
    throw ConfigError("synth: pattern table has " + std::to_string(patterns.size()) +
                      " rows for K=" + std::to_string(spec.num_classes));
  }
  for (std::size_t i = 0; i < patterns.size(); ++i)
    for (std::size_t j = i + 1; j < patterns.size(); ++j)
      if (patterns[i] == patterns[j]) {
        throw ConfigError("synth: duplicate pattern rows " + std::to_string(i) + " and " +
                          std::to_string(j));
      }
  return patterns;
}

}  // namespace detail

// Noise-free class template: the blob layout that sample noise is added to.
// Blobs fill the central half-box of each flagged region.
template <typename Scalar>
Tensor<Scalar> synth_class_template(const SynthSpec& spec, int cls,
                                    const std::vector<Index>& blob_offset) {
  const int sdims = static_cast<int>(spec.extents.size());
  const int regions = sdims == 2 ? 4 : 8;
  const std::uint32_t mask = detail::resolve_patterns(spec, regions)[static_cast<std::size_t>(cls)];
  const double intensity =
      spec.intensities.empty() ? 1.0 : spec.intensities[static_cast<std::size_t>(cls)];

  Shape shape{spec.channels};
  shape.insert(shape.end(), spec.extents.begin(), spec.extents.end());
  Tensor<Scalar> img(shape);

  const bool three = sdims == 3;
  const Index H = spec.extents[0], W = spec.extents[1], D = three ? spec.extents[2] : 1;
  const Index h2 = H / 2, w2 = W / 2, d2 = three ? D / 2 : 1;
  for (int r = 0; r < regions; ++r) {
    if (!(mask & (1u << r))) continue;
    const Index qx = r & 1, qy = (r >> 1) & 1, qz = three ? ((r >> 2) & 1) : 0;
    // central half-box of the region, shifted by the per-sample offset
    Index y0 = qy * h2 + h2 / 4 + (blob_offset.empty() ? 0 : blob_offset[0]);
    Index x0 = qx * w2 + w2 / 4 + (blob_offset.empty() ? 0 : blob_offset[1]);
    Index z0 = three ? qz * d2 + d2 / 4 + (blob_offset.size() > 2 ? blob_offset[2] : 0) : 0;
    const Index bh = std::max<Index>(1, h2 / 2), bw = std::max<Index>(1, w2 / 2),
                bd = three ? std::max<Index>(1, d2 / 2) : 1;
    y0 = std::clamp<Index>(y0, 0, H - bh);
    x0 = std::clamp<Index>(x0, 0, W - bw);
    if (three) z0 = std::clamp<Index>(z0, 0, D - bd);
    for (Index c = 0; c < spec.channels; ++c)
      for (Index y = y0; y < y0 + bh; ++y)
        for (Index x = x0; x < x0 + bw; ++x)
          for (Index z = z0; z < z0 + bd; ++z) {
            img[((c * H + y) * W + x) * D + z] += static_cast<Scalar>(intensity);
          }
  }
  return img;
}

namespace detail {

template <typename Scalar>
Dataset<Scalar> synth_generate(const SynthSpec& spec, int per_class, const std::string& split,
                               std::mt19937_64& rng) {
  const int sdims = static_cast<int>(spec.extents.size());
  Dataset<Scalar> ds;
  ds.num_classes = spec.num_classes;
  ds.split = split;
  for (int cls = 0; cls < spec.num_classes; ++cls) {
    for (int s = 0; s < per_class; ++s) {
      std::vector<Index> offset(static_cast<std::size_t>(sdims), 0);
      if (spec.jitter > 0) {
        for (auto& o : offset) {
          o = static_cast<Index>(
              std::llround(uniform(rng, -double(spec.jitter), double(spec.jitter))));
        }
      }
      Tensor<Scalar> img = synth_class_template<Scalar>(spec, cls, offset);
      if (spec.noise_std > 0) {
        for (Index i = 0; i < img.size(); ++i) {
          img[i] += static_cast<Scalar>(spec.noise_std * normal01(rng));
        }
      }
      ds.images.push_back(std::move(img));
      ds.labels.push_back(cls);
    }
  }
  return ds;
}

}  // namespace detail

template <typename Scalar>
std::pair<Dataset<Scalar>, Dataset<Scalar>> synth2d(const SynthSpec& spec) {
  detail::validate_synth(spec, 2);
  detail::resolve_patterns(spec, 4);
  std::mt19937_64 rng(derive_seed(spec.seed, 0x2d));
  Dataset<Scalar> train = detail::synth_generate<Scalar>(spec, spec.train_per_class, "train", rng);
  Dataset<Scalar> val = detail::synth_generate<Scalar>(spec, spec.val_per_class, "val", rng);
  return {std::move(train), std::move(val)};
}

template <typename Scalar>
std::pair<Dataset<Scalar>, Dataset<Scalar>> synth3d(const SynthSpec& spec) {
  detail::validate_synth(spec, 3);
  detail::resolve_patterns(spec, 8);
  std::mt19937_64 rng(derive_seed(spec.seed, 0x3d));
  Dataset<Scalar> train = detail::synth_generate<Scalar>(spec, spec.train_per_class, "train", rng);
  Dataset<Scalar> val = detail::synth_generate<Scalar>(spec, spec.val_per_class, "val", rng);
  return {std::move(train), std::move(val)};
}

// Stratified split: per-class counts land within +-1 of the fraction.
template <typename Scalar>
std::pair<Dataset<Scalar>, Dataset<Scalar>> split(const Dataset<Scalar>& ds,
                                                  double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("split: train fraction must lie in (0,1), got " +
                      std::to_string(train_fraction));
  }
  if (ds.images.empty()) throw ConfigError("split: empty dataset");

  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.num_classes));
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  }
  std::mt19937_64 rng(derive_seed(seed, 0x5b117));
  for (auto& ix : by_class) shuffle_indices(ix, rng);

  // floor per class, then hand the remaining slots to the largest
  // fractional remainders (ties to the lower class index)
  const auto target_total =
      static_cast<std::size_t>(std::llround(train_fraction * double(ds.images.size())));
  std::vector<std::size_t> take(by_class.size());
  std::vector<std::pair<double, std::size_t>> rema;
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    const double exact = train_fraction * double(by_class[k].size());
    take[k] = static_cast<std::size_t>(exact);
    assigned += take[k];
    rema.emplace_back(-(exact - double(take[k])), k);
  }
  std::sort(rema.begin(), rema.end());
  for (std::size_t i = 0; i < rema.size() && assigned < target_total; ++i) {
    const std::size_t k = rema[i].second;
    if (take[k] < by_class[k].size()) {
      ++take[k];
      ++assigned;
    }
  }

  Dataset<Scalar> train, val;
  train.num_classes = val.num_classes = ds.num_classes;
  train.split = "train";
  val.split = "val";
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    for (std::size_t i = 0; i < by_class[k].size(); ++i) {
      Dataset<Scalar>& dst = i < take[k] ? train : val;
      dst.images.push_back(ds.images[by_class[k][i]]);
      dst.labels.push_back(ds.labels[by_class[k][i]]);
    }
  }
  return {std::move(train), std::move(val)};
}

// Per-channel standardization with train-split statistics applied to both
// splits. Accumulates in double regardless of Scalar.
template <typename Scalar>
void normalize(Dataset<Scalar>& train, Dataset<Scalar>& val) {
  if (train.images.empty()) throw ConfigError("normalize: empty train split");
  const Index channels = train.images[0].extent(0);
  const Index per_channel = train.images[0].size() / channels;

  std::vector<double> mean(static_cast<std::size_t>(channels), 0.0);
  std::vector<double> var(static_cast<std::size_t>(channels), 0.0);
  const double n = double(train.images.size()) * double(per_channel);
  for (const auto& img : train.images)
    for (Index c = 0; c < channels; ++c) {
      const Scalar* p = img.data() + c * per_channel;
      for (Index i = 0; i < per_channel; ++i) mean[static_cast<std::size_t>(c)] += double(p[i]);
    }
  for (auto& m : mean) m /= n;
  for (const auto& img : train.images)
    for (Index c = 0; c < channels; ++c) {
      const Scalar* p = img.data() + c * per_channel;
      for (Index i = 0; i < per_channel; ++i) {
        const double d = double(p[i]) - mean[static_cast<std::size_t>(c)];
        var[static_cast<std::size_t>(c)] += d * d;
      }
    }
  std::vector<double> std_dev(mean.size());
  for (std::size_t c = 0; c < var.size(); ++c) {
    std_dev[c] = std::max(std::sqrt(var[c] / n), 1e-6);  // zero-variance guard
  }

  const auto apply = [&](Dataset<Scalar>& ds) {
    for (auto& img : ds.images)
      for (Index c = 0; c < channels; ++c) {
        Scalar* p = img.data() + c * per_channel;
        const Scalar m = static_cast<Scalar>(mean[static_cast<std::size_t>(c)]);
        const Scalar s = static_cast<Scalar>(std_dev[static_cast<std::size_t>(c)]);
        for (Index i = 0; i < per_channel; ++i) p[i] = (p[i] - m) / s;
      }
    ds.channel_mean = mean;
    ds.channel_std = std_dev;
  };
  apply(train);
  apply(val);
}

}  // namespace gridnet
