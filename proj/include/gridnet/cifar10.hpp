#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "gridnet/data.hpp"
#include "gridnet/errors.hpp"
#include "gridnet/tensor.hpp"

// CIFAR-10 binary batches: records of 3073 bytes, 1 label byte then
// 3 x 1024 channel-planar pixel bytes for a 32x32 RGB image.

namespace gridnet {

inline constexpr std::size_t kCifarRecordBytes = 3073;
inline constexpr std::size_t kCifarPixelBytes = 3072;
inline constexpr int kCifarClasses = 10;

struct CifarRecord {
  unsigned char label;
  std::array<unsigned char, kCifarPixelBytes> pixels;
};

// Parses one batch file; throws FormatError (naming the byte offset) on a
// size that is not a multiple of 3073 or a label byte >= 10.
std::vector<CifarRecord> read_cifar10_batch(const std::string& path);

std::vector<std::string> cifar10_train_files();
std::string cifar10_test_file();

template <typename Scalar>
Dataset<Scalar> cifar_records_to_dataset(const std::vector<CifarRecord>& records,
                                         const std::string& split) {
  Dataset<Scalar> ds;
  ds.num_classes = kCifarClasses;
  ds.split = split;
  ds.images.reserve(records.size());
  ds.labels.reserve(records.size());
  for (const CifarRecord& r : records) {
    Tensor<Scalar> img(Shape{3, 32, 32});
    // channel-planar source matches {C,H,W} row-major layout directly
    for (std::size_t i = 0; i < kCifarPixelBytes; ++i) {
      img[static_cast<Index>(i)] = static_cast<Scalar>(r.pixels[i]) / Scalar(255);
    }
    ds.images.push_back(std::move(img));
    ds.labels.push_back(static_cast<int>(r.label));
  }
  return ds;
}

// train = data_batch_1..5.bin concatenated in file order, val = test_batch.bin.
// Pixels are scaled to [0,1]; standardization is a separate step.
template <typename Scalar>
std::pair<Dataset<Scalar>, Dataset<Scalar>> load_cifar10(const std::string& dir) {
  std::vector<CifarRecord> train_records;
  for (const std::string& name : cifar10_train_files()) {
    std::vector<CifarRecord> batch = read_cifar10_batch(dir + "/" + name);
    train_records.insert(train_records.end(), batch.begin(), batch.end());
  }
  std::vector<CifarRecord> val_records = read_cifar10_batch(dir + "/" + cifar10_test_file());
  return {cifar_records_to_dataset<Scalar>(train_records, "train"),
          cifar_records_to_dataset<Scalar>(val_records, "val")};
}

// Inverse of the pixel scaling, for bit-faithfulness checks against the
// source files. Only valid on unnormalized data.
template <typename Scalar>
std::vector<CifarRecord> dataset_to_cifar_records(const Dataset<Scalar>& ds) {
  std::vector<CifarRecord> records(ds.images.size());
  for (std::size_t s = 0; s < ds.images.size(); ++s) {
    records[s].label = static_cast<unsigned char>(ds.labels[s]);
    const Tensor<Scalar>& img = ds.images[s];
    for (std::size_t i = 0; i < kCifarPixelBytes; ++i) {
      records[s].pixels[i] = static_cast<unsigned char>(
          std::lround(static_cast<double>(img[static_cast<Index>(i)]) * 255.0));
    }
  }
  return records;
}

std::string cifar_records_to_bytes(const std::vector<CifarRecord>& records);

}  // namespace gridnet
