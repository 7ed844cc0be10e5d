#ifndef VF_RNG_HPP
#define VF_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace vf {

// Deterministic random stream keyed by (master seed, purpose label, index).
// Every randomized operation in the library draws from one of these, so a
// whole pipeline replays bit-identically from its master seed. Uniform and
// normal variates are generated from raw engine words rather than
// std::distribution objects, keeping the value sequence pinned to the
// mt19937_64 output sequence alone.
class RngStream {
 public:
  RngStream(std::uint64_t master, std::string_view purpose, std::uint64_t index)
      : engine_(mix(master, purpose, index)) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Integer uniform in [0, n), n > 0. Rejection keeps the draw unbiased.
  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller; one spare value cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  static std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  static std::uint64_t mix(std::uint64_t master, std::string_view purpose,
                           std::uint64_t index) {
    std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a over the label
    for (unsigned char c : purpose) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
    return splitmix64(splitmix64(master ^ h) + index);
  }

  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace vf

#endif  // VF_RNG_HPP
