#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace pix2surf {

// Error taxonomy: config/usage errors map to CLI exit 2, everything else to 1.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};
struct IoError : std::runtime_error {
  explicit IoError(const std::string& m) : std::runtime_error(m) {}
};
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& m) : std::runtime_error(m) {}
};
struct RenderError : std::runtime_error {
  explicit RenderError(const std::string& m) : std::runtime_error(m) {}
};
struct IncompatError : std::runtime_error {
  explicit IncompatError(const std::string& m) : std::runtime_error(m) {}
};
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& m) : std::runtime_error(m) {}
};

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// xoshiro256++ with all distributions implemented in-house so streams are
// bit-identical across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) { reseed(seed); }

  void reseed(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0,1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), unbiased via rejection.
  uint64_t next_below(uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::next_below(0)");
    uint64_t threshold = (0ull - n) % n;
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  int uniform_int(int lo, int hi) {  // inclusive range
    return lo + int(next_below(uint64_t(hi - lo + 1)));
  }

  double normal() {
    // Box-Muller; consumes two draws.
    double u1 = uniform(), u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {  // Fisher-Yates
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = size_t(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::vector<uint64_t> state() const { return {s_[0], s_[1], s_[2], s_[3]}; }
  void set_state(const std::vector<uint64_t>& st) {
    if (st.size() != 4) throw std::invalid_argument("rng state size");
    for (int i = 0; i < 4; ++i) s_[i] = st[i];
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  uint64_t s_[4];
};

// Stable seed derivation for stateless per-(epoch, step, …) streams.
inline uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
  uint64_t s = base;
  splitmix64(s);
  s ^= 0x8000000000000000ull + a * 0x9E3779B97F4A7C15ull;
  uint64_t r = splitmix64(s);
  s ^= b * 0xC2B2AE3D27D4EB4Full;
  r ^= splitmix64(s);
  s ^= c * 0x165667B19E3779F9ull;
  r ^= splitmix64(s);
  return r;
}

inline const uint32_t* crc32_table() {
  static uint32_t table[256];
  static bool init = [] {
    for (uint32_t n = 0; n < 256; ++n) {
      uint32_t c = n;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      table[n] = c;
    }
    return true;
  }();
  (void)init;
  return table;
}

inline uint32_t crc32(const uint8_t* data, size_t len, uint32_t crc = 0) {
  const uint32_t* t = crc32_table();
  crc = ~crc;
  for (size_t i = 0; i < len; ++i) crc = t[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
  return ~crc;
}

inline uint32_t adler32(const uint8_t* data, size_t len) {
  uint32_t a = 1, b = 0;
  for (size_t i = 0; i < len; ++i) {
    a = (a + data[i]) % 65521u;
    b = (b + a) % 65521u;
  }
  return (b << 16) | a;
}

inline std::string hex32(uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace pix2surf
