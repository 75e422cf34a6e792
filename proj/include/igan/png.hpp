#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>
#include <zlib.h>

#include "igan/common.hpp"
#include "igan/tensor.hpp"

// Minimal PNG output: 8-bit RGB, one zlib-compressed IDAT, filter 0 on every
// scanline. Enough to drop sample grids next to a training run.

namespace igan {

namespace detail {

inline void png_be32(std::vector<unsigned char>& out, uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

inline void png_chunk(std::ofstream& out, const char* type,
                      const std::vector<unsigned char>& payload) {
  std::vector<unsigned char> head;
  png_be32(head, static_cast<uint32_t>(payload.size()));
  out.write(reinterpret_cast<const char*>(head.data()), 4);
  out.write(type, 4);
  if (!payload.empty())
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
  uint32_t crc = crc32(0L, reinterpret_cast<const Bytef*>(type), 4);
  if (!payload.empty())
    crc = crc32(crc, payload.data(), static_cast<uInt>(payload.size()));
  std::vector<unsigned char> tail;
  png_be32(tail, crc);
  out.write(reinterpret_cast<const char*>(tail.data()), 4);
}

}  // namespace detail

// Writes row-major RGB bytes (3 per pixel) as a PNG file.
inline void write_png_rgb8(const std::string& path,
                           const std::vector<unsigned char>& rgb, int64_t w,
                           int64_t h) {
  check(w > 0 && h > 0, ErrorKind::usage, "png size must be positive");
  check(static_cast<int64_t>(rgb.size()) == w * h * 3, ErrorKind::usage,
        "png payload size mismatch: expected ", w * h * 3, " bytes, got ",
        rgb.size());
  // Raw image stream: one filter byte (0) before each scanline.
  std::vector<unsigned char> raw(static_cast<size_t>((w * 3 + 1) * h));
  for (int64_t y = 0; y < h; ++y) {
    raw[static_cast<size_t>(y * (w * 3 + 1))] = 0;
    std::memcpy(raw.data() + y * (w * 3 + 1) + 1, rgb.data() + y * w * 3,
                static_cast<size_t>(w * 3));
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> idat(bound);
  const int rc = compress2(idat.data(), &bound, raw.data(),
                           static_cast<uLong>(raw.size()), 6);
  check(rc == Z_OK, ErrorKind::io, "zlib compression failed writing '", path,
        "'");
  idat.resize(bound);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  check(out.good(), ErrorKind::io, "cannot open '", path, "' for writing");
  static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a,
                                       '\n'};
  out.write(reinterpret_cast<const char*>(sig), 8);
  std::vector<unsigned char> ihdr;
  detail::png_be32(ihdr, static_cast<uint32_t>(w));
  detail::png_be32(ihdr, static_cast<uint32_t>(h));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // color type: truecolor
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter
  ihdr.push_back(0);  // interlace
  detail::png_chunk(out, "IHDR", ihdr);
  detail::png_chunk(out, "IDAT", idat);
  detail::png_chunk(out, "IEND", {});
  check(out.good(), ErrorKind::io, "failed while writing '", path, "'");
}

// Tiles [N, C, S, S] images (C = 1 or 3, values in [-1, 1]) into a grid with
// a 2-pixel gutter and writes it as a PNG. Slots past the last image stay at
// the gutter gray.
inline void write_image_grid_png(const std::string& path, const Tensor& images,
                                 int64_t cols) {
  check(images.rank() == 4, ErrorKind::usage,
        "expected [N, C, S, S] images, got ", shape_str(images.shape()));
  const int64_t n = images.dim(0), c = images.dim(1), s = images.dim(2);
  check(n > 0, ErrorKind::usage, "cannot write an empty grid");
  check(c == 1 || c == 3, ErrorKind::usage, "grid needs 1 or 3 channels");
  check(cols > 0, ErrorKind::usage, "grid needs a positive column count");
  const int64_t rows = (n + cols - 1) / cols;
  const int64_t gut = 2;
  const int64_t w = cols * s + (cols + 1) * gut;
  const int64_t h = rows * s + (rows + 1) * gut;
  std::vector<unsigned char> rgb(static_cast<size_t>(w * h * 3), 96);

  auto byte_of = [](Real v) {
    const Real scaled = (v + Real(1)) * Real(0.5) * Real(255);
    return static_cast<unsigned char>(
        std::lround(double(std::clamp(scaled, Real(0), Real(255)))));
  };
  for (int64_t i = 0; i < n; ++i) {
    const int64_t gy = (i / cols) * (s + gut) + gut;
    const int64_t gx = (i % cols) * (s + gut) + gut;
    for (int64_t y = 0; y < s; ++y)
      for (int64_t x = 0; x < s; ++x) {
        unsigned char* px = rgb.data() + ((gy + y) * w + gx + x) * 3;
        if (c == 3) {
          px[0] = byte_of(images.at(images.idx4(i, 0, y, x)));
          px[1] = byte_of(images.at(images.idx4(i, 1, y, x)));
          px[2] = byte_of(images.at(images.idx4(i, 2, y, x)));
        } else {
          px[0] = px[1] = px[2] = byte_of(images.at(images.idx4(i, 0, y, x)));
        }
      }
  }
  write_png_rgb8(path, rgb, w, h);
}

}  // namespace igan
