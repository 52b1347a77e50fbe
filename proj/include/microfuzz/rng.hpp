#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace microfuzz {

// splitmix64; used to derive independent stream seeds from one campaign seed.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t base, std::string_view tag) {
  uint64_t h = base;
  for (char c : tag) h = splitmix64(h ^ static_cast<unsigned char>(c));
  return splitmix64(h);
}

// Deterministic random stream. All sampling is hand-rolled on top of
// mt19937_64 so sequences are identical across standard library versions.
class RngStream {
 public:
  explicit RngStream(uint64_t seed = 0) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform integer in [0, n); n == 0 yields 0.
  uint64_t below(uint64_t n) {
    if (n == 0) return 0;
    // Rejection sampling to avoid modulo bias.
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }

  // Uniform double in [0, 1) with 53 bits of precision.
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

  // Standard normal via Box-Muller (single value per draw pair).
  double normal() {
    double u1 = unit();
    double u2 = unit();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  bool coin() { return (engine_() & 1) != 0; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace microfuzz
