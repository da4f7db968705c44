#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "gridnet/errors.hpp"
#include "gridnet/network.hpp"

// Checkpoint layout (all integers and values little-endian):
//   magic "GDN1"
//   u8   precision flag: bytes per value (4 or 8)
//   str  architecture id            (str = u32 length + bytes)
//   u32  input rank, i64 extents...
//   u32  class count K
//   u32  parameter count; per parameter: str name, u32 rank, i64 extents...
//   raw parameter values in manifest order
// Round-trips are bit-exact: values are written as their in-memory IEEE bits.

namespace gridnet {

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace detail {

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

inline void put_str(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  template <typename T>
  T get(const char* what) {
    if (pos + sizeof(T) > buf.size()) {
      throw FormatError(std::string("checkpoint: truncated reading ") + what + " at offset " +
                        std::to_string(pos));
    }
    T v;
    std::memcpy(&v, buf.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }

  std::string get_str(const char* what) {
    const auto n = get<std::uint32_t>(what);
    if (pos + n > buf.size()) {
      throw FormatError(std::string("checkpoint: truncated reading ") + what + " at offset " +
                        std::to_string(pos));
    }
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace detail

template <typename Scalar>
std::string serialize_network(const Network<Scalar>& net) {
  std::string out;
  out.append("GDN1");
  detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(sizeof(Scalar)));
  detail::put_str(out, net.arch_id);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(net.input_shape().size()));
  for (Index e : net.input_shape()) detail::put<std::int64_t>(out, e);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(net.num_classes()));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(net.params().size()));
  for (const auto& p : net.params()) {
    detail::put_str(out, p.name);
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.shape().size()));
    for (Index e : p.value.shape()) detail::put<std::int64_t>(out, e);
  }
  for (const auto& p : net.params()) {
    out.append(reinterpret_cast<const char*>(p.value.data()),
               sizeof(Scalar) * static_cast<std::size_t>(p.value.size()));
  }
  return out;
}

// Fills the parameters of an already-built network; the stored manifest must
// match the network's manifest exactly.
template <typename Scalar>
void deserialize_network(const std::string& bytes, Network<Scalar>& net) {
  detail::Reader r{bytes};
  if (bytes.size() < 4 || bytes.compare(0, 4, "GDN1") != 0) {
    throw FormatError("checkpoint: bad magic, expected GDN1");
  }
  r.pos = 4;
  const auto prec = r.get<std::uint8_t>("precision");
  if (prec != sizeof(Scalar)) {
    throw FormatError("checkpoint: precision flag " + std::to_string(prec * 8) +
                      "-bit does not match network scalar " +
                      std::to_string(sizeof(Scalar) * 8) + "-bit");
  }
  const std::string arch = r.get_str("arch id");
  const auto rank = r.get<std::uint32_t>("input rank");
  Shape in_shape(rank);
  for (auto& e : in_shape) e = r.get<std::int64_t>("input extent");
  if (!same_shape(in_shape, net.input_shape())) {
    throw FormatError("checkpoint: input shape " + shape_str(in_shape) +
                      " does not match network " + shape_str(net.input_shape()));
  }
  r.get<std::uint32_t>("class count");
  const auto n_params = r.get<std::uint32_t>("parameter count");
  if (n_params != net.params().size()) {
    throw FormatError("checkpoint: manifest holds " + std::to_string(n_params) +
                      " parameters, network has " + std::to_string(net.params().size()));
  }
  for (std::uint32_t i = 0; i < n_params; ++i) {
    const std::string name = r.get_str("parameter name");
    const auto prank = r.get<std::uint32_t>("parameter rank");
    Shape pshape(prank);
    for (auto& e : pshape) e = r.get<std::int64_t>("parameter extent");
    const auto& p = net.params()[i];
    if (name != p.name || !same_shape(pshape, p.value.shape())) {
      throw FormatError("checkpoint: manifest entry " + std::to_string(i) + " is " + name + " " +
                        shape_str(pshape) + ", network expects " + p.name + " " +
                        shape_str(p.value.shape()));
    }
  }
  for (auto& p : net.params()) {
    const std::size_t n = sizeof(Scalar) * static_cast<std::size_t>(p.value.size());
    if (r.pos + n > bytes.size()) {
      throw FormatError("checkpoint: truncated parameter values at offset " +
                        std::to_string(r.pos));
    }
    std::memcpy(p.value.data(), bytes.data() + r.pos, n);
    r.pos += n;
  }
  if (r.pos != bytes.size()) {
    throw FormatError("checkpoint: " + std::to_string(bytes.size() - r.pos) +
                      " trailing bytes");
  }
  net.arch_id = arch;
}

template <typename Scalar>
void save_checkpoint(const Network<Scalar>& net, const std::string& path) {
  const std::string bytes = serialize_network(net);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("checkpoint: cannot open " + path + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError("checkpoint: short write to " + path);
}

template <typename Scalar>
void load_checkpoint(Network<Scalar>& net, const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("checkpoint: cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  deserialize_network(bytes, net);
}

template <typename Scalar>
std::uint64_t checkpoint_hash(const Network<Scalar>& net) {
  const std::string bytes = serialize_network(net);
  return fnv1a64(bytes.data(), bytes.size());
}

}  // namespace gridnet
