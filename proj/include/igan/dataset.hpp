#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "igan/common.hpp"
#include "igan/rng.hpp"
#include "igan/tensor.hpp"

namespace igan {

// A named pool of images in [-1, 1], shape [N, C, S, S], from which training
// batches are drawn.
struct ImageSet {
  std::string name;
  Tensor images;
  bool augment = false;

  int64_t count() const { return images.dim(0); }
};

namespace detail {

inline uint32_t read_be32(std::istream& in, const char* what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  check(in.gcount() == 4, ErrorKind::data, "idx file truncated while reading ",
        what);
  return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) |
         (uint32_t(b[2]) << 8) | uint32_t(b[3]);
}

inline void write_be32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace detail

// Reads an idx3-ubyte image file into [N, 1, rows, cols] with bytes mapped
// linearly onto [-1, 1] (0 -> -1, 255 -> +1).
inline Tensor load_idx_images(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), ErrorKind::io, "cannot open '", path, "' for reading");
  const uint32_t magic = detail::read_be32(in, "magic");
  check(magic == 0x00000803u, ErrorKind::data, "'", path,
        "' is not an idx3-ubyte image file (bad magic)");
  const int64_t n = detail::read_be32(in, "image count");
  const int64_t rows = detail::read_be32(in, "row count");
  const int64_t cols = detail::read_be32(in, "column count");
  check(n > 0 && rows > 0 && cols > 0, ErrorKind::data,
        "idx image file '", path, "' declares an empty tensor");
  std::vector<unsigned char> raw(static_cast<size_t>(n * rows * cols));
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  check(in.gcount() == static_cast<std::streamsize>(raw.size()),
        ErrorKind::data, "idx file truncated: '", path, "' promises ", n,
        " images but the pixel payload is short");
  Tensor t({n, 1, rows, cols});
  for (size_t i = 0; i < raw.size(); ++i)
    t.at(static_cast<int64_t>(i)) = Real(2) * Real(raw[i]) / Real(255) - Real(1);
  return t;
}

// Reads an idx1-ubyte label file.
inline std::vector<uint8_t> load_idx_labels(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), ErrorKind::io, "cannot open '", path, "' for reading");
  const uint32_t magic = detail::read_be32(in, "magic");
  check(magic == 0x00000801u, ErrorKind::data, "'", path,
        "' is not an idx1-ubyte label file (bad magic)");
  const int64_t n = detail::read_be32(in, "label count");
  check(n > 0, ErrorKind::data, "idx label file '", path, "' is empty");
  std::vector<uint8_t> labels(static_cast<size_t>(n));
  in.read(reinterpret_cast<char*>(labels.data()),
          static_cast<std::streamsize>(labels.size()));
  check(in.gcount() == static_cast<std::streamsize>(labels.size()),
        ErrorKind::data, "idx file truncated: '", path, "' promises ", n,
        " labels but the payload is short");
  return labels;
}

// Writes [N, 1, rows, cols] images in [-1, 1] as idx3-ubyte, rounding each
// value back to the nearest byte.
inline void save_idx_images(const std::string& path, const Tensor& images) {
  check(images.rank() == 4 && images.dim(1) == 1, ErrorKind::usage,
        "idx images must be [N, 1, rows, cols], got ",
        shape_str(images.shape()));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  check(out.good(), ErrorKind::io, "cannot open '", path, "' for writing");
  detail::write_be32(out, 0x00000803u);
  detail::write_be32(out, static_cast<uint32_t>(images.dim(0)));
  detail::write_be32(out, static_cast<uint32_t>(images.dim(2)));
  detail::write_be32(out, static_cast<uint32_t>(images.dim(3)));
  std::vector<unsigned char> raw(static_cast<size_t>(images.numel()));
  for (int64_t i = 0; i < images.numel(); ++i) {
    Real v = (images.at(i) + Real(1)) * Real(0.5) * Real(255);
    v = std::min(Real(255), std::max(Real(0), v));
    raw[static_cast<size_t>(i)] =
        static_cast<unsigned char>(std::lround(double(v)));
  }
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
  check(out.good(), ErrorKind::io, "failed while writing '", path, "'");
}

inline void save_idx_labels(const std::string& path,
                            const std::vector<uint8_t>& labels) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  check(out.good(), ErrorKind::io, "cannot open '", path, "' for writing");
  detail::write_be32(out, 0x00000801u);
  detail::write_be32(out, static_cast<uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()),
            static_cast<std::streamsize>(labels.size()));
  check(out.good(), ErrorKind::io, "failed while writing '", path, "'");
}

// Pads [N, C, S, S] images symmetrically up to side `to`, filling with
// `fill` (for byte-0 background use -1).
inline Tensor pad_images(const Tensor& images, int64_t to, Real fill) {
  check(images.rank() == 4, ErrorKind::usage, "pad_images expects [N,C,H,W]");
  const int64_t n = images.dim(0), c = images.dim(1), s = images.dim(2);
  check(images.dim(3) == s, ErrorKind::usage, "pad_images expects square images");
  check(to >= s && (to - s) % 2 == 0, ErrorKind::usage,
        "cannot pad side ", s, " to side ", to, " symmetrically");
  const int64_t off = (to - s) / 2;
  Tensor out = Tensor::full({n, c, to, to}, fill);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t y = 0; y < s; ++y)
        for (int64_t x = 0; x < s; ++x)
          out.at(out.idx4(i, ch, y + off, x + off)) =
              images.at(images.idx4(i, ch, y, x));
  return out;
}

// Keeps only the images whose label appears in `wanted`, preserving order.
inline ImageSet partition_by_content(const std::string& name,
                                     const Tensor& images,
                                     const std::vector<uint8_t>& labels,
                                     const std::vector<uint8_t>& wanted) {
  check(images.rank() == 4, ErrorKind::usage, "expected [N,C,H,W] images");
  check(images.dim(0) == static_cast<int64_t>(labels.size()), ErrorKind::data,
        "image/label count mismatch: ", images.dim(0), " images vs ",
        labels.size(), " labels");
  check(!wanted.empty(), ErrorKind::usage, "no content labels requested");
  std::vector<int64_t> keep;
  for (size_t i = 0; i < labels.size(); ++i)
    for (uint8_t w : wanted)
      if (labels[i] == w) {
        keep.push_back(static_cast<int64_t>(i));
        break;
      }
  check(!keep.empty(), ErrorKind::data, "domain '", name,
        "' matched zero images for its content labels");
  const int64_t c = images.dim(1), h = images.dim(2), w = images.dim(3);
  const int64_t plane = c * h * w;
  Tensor sel({static_cast<int64_t>(keep.size()), c, h, w});
  for (size_t k = 0; k < keep.size(); ++k)
    for (int64_t j = 0; j < plane; ++j)
      sel.at(static_cast<int64_t>(k) * plane + j) =
          images.at(keep[k] * plane + j);
  return ImageSet{name, std::move(sel), false};
}

namespace detail {

// Horizontal flip + pad-4 edge replication + random crop, the draw order
// being flip coin, x offset, y offset. Offsets land in [0, 8].
inline void augment_into(const Tensor& src, int64_t img, Tensor& dst,
                         int64_t slot, Rng& rng) {
  const int64_t c = src.dim(1), s = src.dim(2);
  const bool flip = rng.uniform() < 0.5;
  const int64_t ox = static_cast<int64_t>(rng.below(9));
  const int64_t oy = static_cast<int64_t>(rng.below(9));
  auto clamp = [s](int64_t v) { return std::min(s - 1, std::max(int64_t(0), v)); };
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t y = 0; y < s; ++y)
      for (int64_t x = 0; x < s; ++x) {
        int64_t sx = clamp(x + ox - 4);
        int64_t sy = clamp(y + oy - 4);
        if (flip) sx = s - 1 - sx;
        dst.at(dst.idx4(slot, ch, y, x)) = src.at(src.idx4(img, ch, sy, sx));
      }
}

}  // namespace detail

// Draws a batch of `b` images. Per slot the index is drawn first, then (when
// augmentation is on) the augmentation parameters, so the stream layout is
// stable regardless of image content.
inline Tensor next_batch(const ImageSet& set, int64_t b, Rng& rng) {
  check(b > 0, ErrorKind::usage, "batch size must be positive, got ", b);
  check(set.count() > 0, ErrorKind::data, "image set '", set.name,
        "' is empty");
  const int64_t c = set.images.dim(1), s = set.images.dim(2);
  const int64_t plane = c * s * s;
  Tensor out({b, c, s, s});
  for (int64_t k = 0; k < b; ++k) {
    const int64_t idx = static_cast<int64_t>(
        rng.below(static_cast<uint64_t>(set.count())));
    if (set.augment) {
      detail::augment_into(set.images, idx, out, k, rng);
    } else {
      for (int64_t j = 0; j < plane; ++j)
        out.at(k * plane + j) = set.images.at(idx * plane + j);
    }
  }
  return out;
}

}  // namespace igan
