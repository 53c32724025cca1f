#pragma once

#include <cstdint>
#include <cmath>

namespace gptcm {

/// Counter-based PRNG: Philox4x32-10 (Salmon et al. 2011). The key is the
/// user seed; the 128-bit counter splits into a 64-bit draw index and a
/// 64-bit stream id, so independent substreams (per chain, per purpose) are
/// just different stream ids on the same seed. Output is identical across
/// platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : key0_(static_cast<std::uint32_t>(seed)),
        key1_(static_cast<std::uint32_t>(seed >> 32)),
        stream_(stream) {}

  /// Same seed, different stream id.
  Rng substream(std::uint64_t stream) const {
    Rng r(seed_value(), stream);
    return r;
  }
  std::uint64_t seed_value() const {
    return static_cast<std::uint64_t>(key0_) | (static_cast<std::uint64_t>(key1_) << 32);
  }
  std::uint64_t stream_id() const { return stream_; }

  std::uint64_t next_u64() {
    if (have_buffered_) {
      have_buffered_ = false;
      return buffered_;
    }
    std::uint32_t x0 = static_cast<std::uint32_t>(counter_);
    std::uint32_t x1 = static_cast<std::uint32_t>(counter_ >> 32);
    std::uint32_t x2 = static_cast<std::uint32_t>(stream_);
    std::uint32_t x3 = static_cast<std::uint32_t>(stream_ >> 32);
    ++counter_;
    std::uint32_t k0 = key0_, k1 = key1_;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t m0 = 0xD2511F53ULL * x0;
      const std::uint64_t m1 = 0xCD9E8D57ULL * x2;
      const std::uint32_t hi0 = static_cast<std::uint32_t>(m0 >> 32);
      const std::uint32_t lo0 = static_cast<std::uint32_t>(m0);
      const std::uint32_t hi1 = static_cast<std::uint32_t>(m1 >> 32);
      const std::uint32_t lo1 = static_cast<std::uint32_t>(m1);
      x0 = hi1 ^ x1 ^ k0;
      x1 = lo1;
      x2 = hi0 ^ x3 ^ k1;
      x3 = lo0;
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    buffered_ = static_cast<std::uint64_t>(x2) | (static_cast<std::uint64_t>(x3) << 32);
    have_buffered_ = true;
    return static_cast<std::uint64_t>(x0) | (static_cast<std::uint64_t>(x1) << 32);
  }

  /// Uniform on the open interval (0,1).
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::uint64_t uniform_index(std::uint64_t n) {  // 0..n-1, rejection-free enough for n << 2^64
    return next_u64() % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (the second value of each pair is cached).
  double normal() {
    if (have_normal_) {
      have_normal_ = false;
      return cached_normal_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_normal_ = r * std::sin(a);
    have_normal_ = true;
    return r * std::cos(a);
  }
  double normal(double mean, double sd) { return mean + sd * normal(); }

  double exponential(double rate) { return -std::log(uniform()) / rate; }

 private:
  std::uint32_t key0_, key1_;
  std::uint64_t stream_ = 0;
  std::uint64_t counter_ = 0;
  std::uint64_t buffered_ = 0;
  bool have_buffered_ = false;
  double cached_normal_ = 0.0;
  bool have_normal_ = false;
};

}  // namespace gptcm
