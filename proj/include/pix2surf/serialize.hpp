#pragma once

#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "pix2surf/tensor.hpp"

namespace pix2surf {

// Self-describing binary container: a JSON meta record plus named f64 arrays.
// Little-endian, trailing CRC32 over the payload; loads are all-or-nothing.
struct ArrayContainer {
  nlohmann::json meta;
  std::map<std::string, Tensor> arrays;
};

namespace detail {

constexpr char kContainerMagic[8] = {'P', '2', 'S', 'A', 'R', 'C', 'H', '1'};

struct CrcWriter {
  std::ofstream f;
  uint32_t crc = 0;

  explicit CrcWriter(const std::string& path) : f(path, std::ios::binary) {
    if (!f) throw IoError("cannot open for write: " + path);
  }
  void write(const void* p, size_t n) {
    f.write(static_cast<const char*>(p), std::streamsize(n));
    crc = crc32(static_cast<const uint8_t*>(p), n, crc);
  }
  template <typename T>
  void write_pod(T v) {
    write(&v, sizeof v);
  }
};

struct CrcReader {
  std::ifstream f;
  uint32_t crc = 0;

  explicit CrcReader(const std::string& path) : f(path, std::ios::binary) {
    if (!f) throw IoError("cannot open: " + path);
  }
  void read(void* p, size_t n) {
    f.read(static_cast<char*>(p), std::streamsize(n));
    if (size_t(f.gcount()) != n) throw IoError("container truncated");
    crc = crc32(static_cast<uint8_t*>(p), n, crc);
  }
  template <typename T>
  T read_pod() {
    T v;
    read(&v, sizeof v);
    return v;
  }
};

}  // namespace detail

inline void write_container(const std::string& path, const ArrayContainer& c) {
  detail::CrcWriter w(path);
  w.write(detail::kContainerMagic, 8);
  w.write_pod<uint32_t>(1);
  std::string meta = c.meta.dump();
  w.write_pod<uint64_t>(meta.size());
  w.write(meta.data(), meta.size());
  w.write_pod<uint64_t>(c.arrays.size());
  for (const auto& [name, t] : c.arrays) {
    w.write_pod<uint32_t>(uint32_t(name.size()));
    w.write(name.data(), name.size());
    w.write_pod<uint32_t>(uint32_t(t.shape.size()));
    for (int d : t.shape) w.write_pod<int64_t>(d);
    w.write(t.data.data(), t.data.size() * sizeof(double));
  }
  uint32_t crc = w.crc;
  w.f.write(reinterpret_cast<const char*>(&crc), 4);
  if (!w.f) throw IoError("write failed: " + path);
}

inline ArrayContainer read_container(const std::string& path) {
  detail::CrcReader r(path);
  char magic[8];
  r.read(magic, 8);
  if (std::memcmp(magic, detail::kContainerMagic, 8) != 0)
    throw IoError("not a checkpoint container: " + path);
  uint32_t version = r.read_pod<uint32_t>();
  if (version != 1)
    throw IncompatError("container version " + std::to_string(version) + " unsupported");
  ArrayContainer c;
  uint64_t meta_len = r.read_pod<uint64_t>();
  std::string meta(meta_len, '\0');
  r.read(meta.data(), meta_len);
  c.meta = nlohmann::json::parse(meta);
  uint64_t n = r.read_pod<uint64_t>();
  for (uint64_t i = 0; i < n; ++i) {
    uint32_t name_len = r.read_pod<uint32_t>();
    std::string name(name_len, '\0');
    r.read(name.data(), name_len);
    uint32_t rank = r.read_pod<uint32_t>();
    std::vector<int> shape(rank);
    for (uint32_t d = 0; d < rank; ++d) shape[d] = int(r.read_pod<int64_t>());
    Tensor t(shape);
    r.read(t.data.data(), t.data.size() * sizeof(double));
    c.arrays.emplace(std::move(name), std::move(t));
  }
  uint32_t payload_crc = r.crc;
  uint32_t stored = 0;
  r.f.read(reinterpret_cast<char*>(&stored), 4);
  if (r.f.gcount() != 4) throw IoError("container truncated (missing crc)");
  if (stored != payload_crc) throw IoError("container corrupt: crc mismatch");
  return c;
}

// Compares two flat config records; raises naming the first differing key.
inline void require_matching_config(const nlohmann::json& expected, const nlohmann::json& actual,
                                    const std::string& what) {
  for (auto it = expected.begin(); it != expected.end(); ++it) {
    if (!actual.contains(it.key()))
      throw IncompatError(what + ": checkpoint lacks key '" + it.key() + "'");
    if (actual[it.key()] != it.value())
      throw IncompatError(what + ": key '" + it.key() + "' differs (" + it.value().dump() +
                          " vs " + actual[it.key()].dump() + ")");
  }
  for (auto it = actual.begin(); it != actual.end(); ++it)
    if (!expected.contains(it.key()))
      throw IncompatError(what + ": unexpected key '" + it.key() + "'");
}

}  // namespace pix2surf
