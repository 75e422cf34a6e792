#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "igan/common.hpp"
#include "igan/tensor.hpp"

namespace igan {

// On-disk container: a JSON descriptor plus named tensors, with a CRC32
// trailer. Layout (all integers little-endian):
//   magic "IGANCKPT" | u32 format version | u64 descriptor length |
//   descriptor bytes | u64 tensor count | records... | u32 crc32
// Record: u32 name length | name | u8 dtype (0 = f32, 1 = f64) | u8 rank |
//   u32 dims[rank] | payload (numel * dtype size, little-endian).
//
// Tensors are held as doubles in memory regardless of on-disk dtype, so a
// float build can read a double archive (and vice versa) for cross-precision
// comparisons; save() narrows to the requested dtype.

constexpr char kArchiveMagic[8] = {'I', 'G', 'A', 'N', 'C', 'K', 'P', 'T'};
constexpr uint32_t kArchiveVersion = 1;

enum class Dtype : uint8_t { f32 = 0, f64 = 1 };

struct ArchiveTensor {
  Shape shape;
  Dtype dtype = Dtype::f32;
  std::vector<double> data;
};

namespace detail {

struct ByteSink {
  std::vector<unsigned char> bytes;
  void raw(const void* p, size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    bytes.insert(bytes.end(), c, c + n);
  }
  void u8(uint8_t v) { raw(&v, 1); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<uint8_t>(v >> (8 * i)));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<uint8_t>(v >> (8 * i)));
  }
  void f32(float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void f64(double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
};

struct ByteSource {
  const unsigned char* p;
  size_t left;
  void need(size_t n, const char* what) {
    check(left >= n, ErrorKind::io, "archive truncated while reading ", what);
  }
  void raw(void* out, size_t n, const char* what) {
    need(n, what);
    std::memcpy(out, p, n);
    p += n;
    left -= n;
  }
  uint8_t u8(const char* what) {
    uint8_t v;
    raw(&v, 1, what);
    return v;
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
    p += 4;
    left -= 4;
    return v;
  }
  uint64_t u64(const char* what) {
    need(8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
    p += 8;
    left -= 8;
    return v;
  }
  float f32(const char* what) {
    uint32_t bits = u32(what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double f64(const char* what) {
    uint64_t bits = u64(what);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
};

}  // namespace detail

class Archive {
 public:
  nlohmann::json descriptor;

  void put(const std::string& name, const Tensor& t,
           Dtype dtype = sizeof(Real) == 8 ? Dtype::f64 : Dtype::f32) {
    ArchiveTensor at;
    at.shape = t.shape();
    at.dtype = dtype;
    at.data.resize(static_cast<size_t>(t.numel()));
    for (int64_t i = 0; i < t.numel(); ++i)
      at.data[static_cast<size_t>(i)] = static_cast<double>(t.at(i));
    order_.push_back(name);
    tensors_.emplace_back(std::move(at));
  }

  bool has(const std::string& name) const { return find(name) >= 0; }

  const ArchiveTensor& raw(const std::string& name) const {
    int64_t i = find(name);
    check(i >= 0, ErrorKind::io, "archive is missing tensor '", name, "'");
    return tensors_[static_cast<size_t>(i)];
  }

  // Materializes a tensor at the build's working precision.
  Tensor get(const std::string& name) const {
    const ArchiveTensor& at = raw(name);
    Tensor t(at.shape);
    for (int64_t i = 0; i < t.numel(); ++i)
      t.at(i) = static_cast<Real>(at.data[static_cast<size_t>(i)]);
    return t;
  }

  const std::vector<std::string>& names() const { return order_; }

  void save(const std::string& path) const {
    detail::ByteSink sink;
    sink.raw(kArchiveMagic, 8);
    sink.u32(kArchiveVersion);
    const std::string desc = descriptor.dump();
    sink.u64(desc.size());
    sink.raw(desc.data(), desc.size());
    sink.u64(order_.size());
    for (size_t t = 0; t < order_.size(); ++t) {
      const std::string& name = order_[t];
      const ArchiveTensor& at = tensors_[t];
      sink.u32(static_cast<uint32_t>(name.size()));
      sink.raw(name.data(), name.size());
      sink.u8(static_cast<uint8_t>(at.dtype));
      sink.u8(static_cast<uint8_t>(at.shape.size()));
      for (int64_t d : at.shape) sink.u32(static_cast<uint32_t>(d));
      for (double v : at.data) {
        if (at.dtype == Dtype::f32)
          sink.f32(static_cast<float>(v));
        else
          sink.f64(v);
      }
    }
    const uint32_t crc = static_cast<uint32_t>(
        crc32(0L, sink.bytes.data(), static_cast<uInt>(sink.bytes.size())));
    sink.u32(crc);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    check(out.good(), ErrorKind::io, "cannot open '", path, "' for writing");
    out.write(reinterpret_cast<const char*>(sink.bytes.data()),
              static_cast<std::streamsize>(sink.bytes.size()));
    out.flush();
    check(out.good(), ErrorKind::io, "failed while writing '", path, "'");
  }

  static Archive load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(in.good(), ErrorKind::io, "cannot open '", path, "' for reading");
    std::vector<unsigned char> bytes(
        (std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    check(bytes.size() >= 8 + 4 + 4, ErrorKind::io,
          "archive truncated: '", path, "' is too small to be an archive");
    check(std::memcmp(bytes.data(), kArchiveMagic, 8) == 0, ErrorKind::io,
          "'", path, "' is not an archive (bad magic)");

    // Checksum covers everything before the 4-byte trailer.
    const size_t body = bytes.size() - 4;
    const uint32_t stored = static_cast<uint32_t>(bytes[body]) |
                            static_cast<uint32_t>(bytes[body + 1]) << 8 |
                            static_cast<uint32_t>(bytes[body + 2]) << 16 |
                            static_cast<uint32_t>(bytes[body + 3]) << 24;
    const uint32_t actual = static_cast<uint32_t>(
        crc32(0L, bytes.data(), static_cast<uInt>(body)));
    check(stored == actual, ErrorKind::io,
          "archive corrupted: checksum mismatch in '", path, "'");

    detail::ByteSource src{bytes.data() + 8, body - 8};
    const uint32_t version = src.u32("format version");
    check(version == kArchiveVersion, ErrorKind::io,
          "unsupported archive version ", version, " in '", path,
          "' (this build reads version ", kArchiveVersion, ")");

    Archive a;
    const uint64_t desc_len = src.u64("descriptor length");
    src.need(desc_len, "descriptor");
    std::string desc(reinterpret_cast<const char*>(src.p), desc_len);
    src.p += desc_len;
    src.left -= desc_len;
    try {
      a.descriptor = nlohmann::json::parse(desc);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::io, "archive descriptor is not valid JSON: ", e.what());
    }

    const uint64_t count = src.u64("tensor count");
    for (uint64_t t = 0; t < count; ++t) {
      const uint32_t name_len = src.u32("tensor name length");
      src.need(name_len, "tensor name");
      std::string name(reinterpret_cast<const char*>(src.p), name_len);
      src.p += name_len;
      src.left -= name_len;
      const uint8_t dtype_code = src.u8("tensor dtype");
      check(dtype_code <= 1, ErrorKind::io, "archive tensor '", name,
            "' has unknown dtype code ", int(dtype_code));
      ArchiveTensor at;
      at.dtype = static_cast<Dtype>(dtype_code);
      const uint8_t rank = src.u8("tensor rank");
      int64_t numel = 1;
      for (int r = 0; r < rank; ++r) {
        int64_t d = src.u32("tensor dim");
        at.shape.push_back(d);
        numel *= d;
      }
      at.data.resize(static_cast<size_t>(numel));
      for (int64_t i = 0; i < numel; ++i)
        at.data[static_cast<size_t>(i)] = at.dtype == Dtype::f32
                                              ? double(src.f32("tensor data"))
                                              : src.f64("tensor data");
      a.order_.push_back(name);
      a.tensors_.emplace_back(std::move(at));
    }
    check(src.left == 0, ErrorKind::io,
          "archive has ", src.left, " unexpected trailing bytes");
    return a;
  }

 private:
  int64_t find(const std::string& name) const {
    for (size_t i = 0; i < order_.size(); ++i)
      if (order_[i] == name) return static_cast<int64_t>(i);
    return -1;
  }

  std::vector<std::string> order_;
  std::vector<ArchiveTensor> tensors_;
};

}  // namespace igan
