#include "gridnet/cifar10.hpp"

#include <cstring>
#include <fstream>

namespace gridnet {

std::vector<std::string> cifar10_train_files() {
  return {"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin",
          "data_batch_5.bin"};
}

std::string cifar10_test_file() { return "test_batch.bin"; }

std::vector<CifarRecord> read_cifar10_batch(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cifar10: cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  if (bytes.size() % kCifarRecordBytes != 0) {
    throw FormatError("cifar10: " + path + " holds " + std::to_string(bytes.size()) +
                      " bytes, not a multiple of " + std::to_string(kCifarRecordBytes) +
                      "; trailing partial record at offset " +
                      std::to_string(bytes.size() - bytes.size() % kCifarRecordBytes));
  }
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  std::vector<CifarRecord> records(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t off = i * kCifarRecordBytes;
    const unsigned char label = static_cast<unsigned char>(bytes[off]);
    if (label >= kCifarClasses) {
      throw FormatError("cifar10: " + path + ": label byte " + std::to_string(label) +
                        " >= 10 at offset " + std::to_string(off));
    }
    records[i].label = label;
    std::memcpy(records[i].pixels.data(), bytes.data() + off + 1, kCifarPixelBytes);
  }
  return records;
}

std::string cifar_records_to_bytes(const std::vector<CifarRecord>& records) {
  std::string bytes;
  bytes.reserve(records.size() * kCifarRecordBytes);
  for (const CifarRecord& r : records) {
    bytes.push_back(static_cast<char>(r.label));
    bytes.append(reinterpret_cast<const char*>(r.pixels.data()), kCifarPixelBytes);
  }
  return bytes;
}

}  // namespace gridnet
