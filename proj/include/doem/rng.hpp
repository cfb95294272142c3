#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace doem {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Counter-based stream. A stream is fully determined by its key, so streams
// for (seed, epoch, batch, row) can be created in any order on any thread.
class RngStream {
 public:
  explicit RngStream(std::uint64_t key = 0) : key_(key) {}

  static RngStream derive(std::uint64_t seed, std::initializer_list<std::uint64_t> coords) {
    std::uint64_t k = splitmix64(seed ^ 0x5851f42d4c957f2dULL);
    for (std::uint64_t c : coords) k = splitmix64(k ^ splitmix64(c + 0x632be59bd9b4e019ULL));
    return RngStream(k);
  }

  std::uint64_t next_u64() { return splitmix64(key_ ^ splitmix64(counter_++)); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n); n > 0. Rejection keeps it unbiased.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  // Standard normal via Box-Muller; consumes two uniforms.
  double normal();

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

inline double RngStream::normal() {
  double u1 = uniform();
  const double u2 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace doem
