#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "pix2surf/common.hpp"

namespace pix2surf {

// Minimal self-contained PNG codec. Writes gray/RGB at 8 or 16 bit using
// uncompressed (stored) deflate blocks, which keeps output bytes fully
// deterministic with no external compression library. The reader accepts
// exactly the subset the writer emits.
struct PngImage {
  int width = 0;
  int height = 0;
  int channels = 0;   // 1 or 3
  int bit_depth = 0;  // 8 or 16
  std::vector<uint16_t> pixels;  // row-major, channel-interleaved

  size_t numel() const { return size_t(width) * height * channels; }
};

namespace detail {

inline void put_u32be(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(uint8_t(v >> 24));
  out.push_back(uint8_t(v >> 16));
  out.push_back(uint8_t(v >> 8));
  out.push_back(uint8_t(v));
}

inline void put_chunk(std::vector<uint8_t>& out, const char type[4],
                      const std::vector<uint8_t>& payload) {
  put_u32be(out, uint32_t(payload.size()));
  size_t type_at = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  uint32_t crc = crc32(out.data() + type_at, 4 + payload.size());
  put_u32be(out, crc);
}

inline std::vector<uint8_t> deflate_stored(const std::vector<uint8_t>& raw) {
  std::vector<uint8_t> z;
  z.push_back(0x78);
  z.push_back(0x01);
  size_t pos = 0;
  do {
    size_t n = std::min<size_t>(raw.size() - pos, 65535);
    bool final = (pos + n == raw.size());
    z.push_back(final ? 1 : 0);
    z.push_back(uint8_t(n & 0xFF));
    z.push_back(uint8_t(n >> 8));
    z.push_back(uint8_t(~n & 0xFF));
    z.push_back(uint8_t((~n >> 8) & 0xFF));
    z.insert(z.end(), raw.begin() + pos, raw.begin() + pos + n);
    pos += n;
  } while (pos < raw.size());
  put_u32be(z, adler32(raw.data(), raw.size()));
  return z;
}

}  // namespace detail

inline std::vector<uint8_t> encode_png(const PngImage& img) {
  if (img.channels != 1 && img.channels != 3) throw IoError("png: channels must be 1 or 3");
  if (img.bit_depth != 8 && img.bit_depth != 16) throw IoError("png: bit depth must be 8 or 16");
  if (img.pixels.size() != img.numel()) throw IoError("png: pixel buffer size mismatch");

  const int bytes_per_sample = img.bit_depth / 8;
  const size_t stride = size_t(img.width) * img.channels * bytes_per_sample;
  std::vector<uint8_t> raw;
  raw.reserve((stride + 1) * img.height);
  size_t p = 0;
  for (int y = 0; y < img.height; ++y) {
    raw.push_back(0);  // filter: none
    for (size_t i = 0; i < size_t(img.width) * img.channels; ++i, ++p) {
      uint16_t v = img.pixels[p];
      if (img.bit_depth == 16) {
        raw.push_back(uint8_t(v >> 8));
        raw.push_back(uint8_t(v & 0xFF));
      } else {
        raw.push_back(uint8_t(v & 0xFF));
      }
    }
  }

  std::vector<uint8_t> out;
  static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  out.insert(out.end(), sig, sig + 8);

  std::vector<uint8_t> ihdr;
  detail::put_u32be(ihdr, uint32_t(img.width));
  detail::put_u32be(ihdr, uint32_t(img.height));
  ihdr.push_back(uint8_t(img.bit_depth));
  ihdr.push_back(img.channels == 3 ? 2 : 0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  detail::put_chunk(out, "IHDR", ihdr);
  detail::put_chunk(out, "IDAT", detail::deflate_stored(raw));
  detail::put_chunk(out, "IEND", {});
  return out;
}

inline void write_png(const std::string& path, const PngImage& img) {
  std::vector<uint8_t> bytes = encode_png(img);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for write: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!f) throw IoError("write failed: " + path);
}

inline PngImage decode_png(const std::vector<uint8_t>& bytes) {
  static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  if (bytes.size() < 8 || !std::equal(sig, sig + 8, bytes.begin()))
    throw IoError("png: bad signature");

  auto u32be = [&](size_t at) -> uint32_t {
    return (uint32_t(bytes[at]) << 24) | (uint32_t(bytes[at + 1]) << 16) |
           (uint32_t(bytes[at + 2]) << 8) | uint32_t(bytes[at + 3]);
  };

  PngImage img;
  std::vector<uint8_t> idat;
  size_t at = 8;
  bool saw_end = false;
  while (at + 8 <= bytes.size()) {
    uint32_t len = u32be(at);
    std::string type(bytes.begin() + at + 4, bytes.begin() + at + 8);
    if (at + 12 + len > bytes.size()) throw IoError("png: truncated chunk");
    const uint8_t* payload = bytes.data() + at + 8;
    uint32_t expect_crc = u32be(at + 8 + len);
    if (crc32(bytes.data() + at + 4, 4 + len) != expect_crc)
      throw IoError("png: chunk crc mismatch");
    if (type == "IHDR") {
      img.width = int(u32be(at + 8));
      img.height = int(u32be(at + 12));
      img.bit_depth = payload[8];
      int color = payload[9];
      if (payload[12] != 0) throw IoError("png: interlaced files unsupported");
      if (color == 0) img.channels = 1;
      else if (color == 2) img.channels = 3;
      else throw IoError("png: unsupported color type");
      if (img.bit_depth != 8 && img.bit_depth != 16)
        throw IoError("png: unsupported bit depth");
    } else if (type == "IDAT") {
      idat.insert(idat.end(), payload, payload + len);
    } else if (type == "IEND") {
      saw_end = true;
      break;
    }
    at += 12 + len;
  }
  if (!saw_end) throw IoError("png: missing IEND");
  if (img.width <= 0 || img.height <= 0) throw IoError("png: missing IHDR");

  // zlib with stored deflate blocks only.
  if (idat.size() < 6) throw IoError("png: idat too short");
  if ((idat[0] & 0x0F) != 8) throw IoError("png: unsupported zlib method");
  std::vector<uint8_t> raw;
  size_t zp = 2;
  for (;;) {
    if (zp >= idat.size()) throw IoError("png: truncated deflate stream");
    uint8_t hdr = idat[zp++];
    if ((hdr >> 1) != 0) throw IoError("png: compressed deflate blocks unsupported");
    if (zp + 4 > idat.size()) throw IoError("png: truncated stored block");
    uint32_t n = idat[zp] | (uint32_t(idat[zp + 1]) << 8);
    uint32_t nn = idat[zp + 2] | (uint32_t(idat[zp + 3]) << 8);
    if ((n ^ 0xFFFF) != nn) throw IoError("png: stored block length check failed");
    zp += 4;
    if (zp + n > idat.size()) throw IoError("png: truncated stored block data");
    raw.insert(raw.end(), idat.begin() + zp, idat.begin() + zp + n);
    zp += n;
    if (hdr & 1) break;
  }
  if (zp + 4 > idat.size()) throw IoError("png: missing adler32");
  uint32_t adler = (uint32_t(idat[zp]) << 24) | (uint32_t(idat[zp + 1]) << 16) |
                   (uint32_t(idat[zp + 2]) << 8) | uint32_t(idat[zp + 3]);
  if (adler != adler32(raw.data(), raw.size())) throw IoError("png: adler32 mismatch");

  const int bps = img.bit_depth / 8;
  const size_t stride = size_t(img.width) * img.channels * bps;
  if (raw.size() != (stride + 1) * size_t(img.height))
    throw IoError("png: decoded size mismatch");

  img.pixels.resize(img.numel());
  size_t rp = 0, pp = 0;
  for (int y = 0; y < img.height; ++y) {
    if (raw[rp++] != 0) throw IoError("png: only filter type 0 supported");
    for (size_t i = 0; i < size_t(img.width) * img.channels; ++i) {
      if (bps == 2) {
        img.pixels[pp++] = uint16_t((raw[rp] << 8) | raw[rp + 1]);
        rp += 2;
      } else {
        img.pixels[pp++] = raw[rp++];
      }
    }
  }
  return img;
}

inline PngImage read_png(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

}  // namespace pix2surf
