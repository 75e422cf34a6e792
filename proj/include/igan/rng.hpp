#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "igan/common.hpp"
#include "igan/tensor.hpp"

namespace igan {

inline uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t splitmix64(uint64_t& x) {
  x += 0x9e3779b97f4a7c15ull;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// xoshiro256++ with named substreams and full state serialization.
//
// Every consumer of randomness in the trainer owns its own stream, derived
// from (experiment seed, stream name). That keeps draw sequences independent
// across domains, which is what makes a joint run bit-identical to separate
// single-domain runs on the shared streams, and it makes checkpoint resume
// exact: the entire state (including the cached Box-Muller spare and a draw
// counter) round-trips through eight 64-bit words.
class Rng {
 public:
  Rng() : Rng(0, "default") {}

  Rng(uint64_t seed, const std::string& stream_name) {
    uint64_t x = seed ^ fnv1a64(stream_name);
    for (auto& w : s_) w = splitmix64(x);
    if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;
  }

  uint64_t next() {
    ++draws_;
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

  // Uniform draw in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform draw in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  uint64_t below(uint64_t n) {
    check(n > 0, ErrorKind::numeric, "rng.below: n must be positive");
    return static_cast<uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  // Standard normal via Box-Muller; the second value of each pair is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  Tensor normal_tensor(Shape shape, double mean = 0.0, double stddev = 1.0) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i)
      t.at(i) = static_cast<Real>(mean + stddev * normal());
    return t;
  }

  Tensor uniform_tensor(Shape shape, double lo, double hi) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i)
      t.at(i) = static_cast<Real>(uniform(lo, hi));
    return t;
  }

  // Total uniform words consumed since construction (cache hits excluded).
  uint64_t draw_count() const { return draws_; }

  // State serialization: eight words, stable layout.
  std::vector<uint64_t> save_state() const {
    return {s_[0],
            s_[1],
            s_[2],
            s_[3],
            has_spare_ ? 1ull : 0ull,
            std::bit_cast<uint64_t>(spare_),
            draws_,
            0ull};
  }

  void load_state(const std::vector<uint64_t>& w) {
    check(w.size() == 8, ErrorKind::io, "rng state must be 8 words, got ",
          w.size());
    for (int i = 0; i < 4; ++i) s_[i] = w[static_cast<size_t>(i)];
    has_spare_ = w[4] != 0;
    spare_ = std::bit_cast<double>(w[5]);
    draws_ = w[6];
  }

  bool operator==(const Rng& o) const {
    return s_[0] == o.s_[0] && s_[1] == o.s_[1] && s_[2] == o.s_[2] &&
           s_[3] == o.s_[3] && has_spare_ == o.has_spare_ &&
           (!has_spare_ || spare_ == o.spare_) && draws_ == o.draws_;
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  uint64_t s_[4] = {};
  bool has_spare_ = false;
  double spare_ = 0.0;
  uint64_t draws_ = 0;
};

}  // namespace igan
