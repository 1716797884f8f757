#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "lpv/core.hpp"

namespace lpv {

// SplitMix64 (Steele, Lea, Flood 2014). Chosen as the repository-wide
// generator because it is a tiny counter-based recurrence that any
// language can reproduce exactly from the same 64-bit seed; shuffle
// order and weight draws are therefore portable across implementations.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

class rng {
 public:
  explicit rng(std::uint64_t seed = 0) : state_(seed) {}

  // derive an independent stream from (seed, tag); tags are short names
  // like "weights/L1" so draw order is insensitive to construction order
  static rng stream(std::uint64_t seed, const std::string& tag) {
    return rng(splitmix64_mix(seed ^ fnv1a64(tag)));
  }

  static rng stream(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t s = seed;
    s = splitmix64_mix(s ^ (0x9e3779b97f4a7c15ull * (tag + 1)));
    return rng(s);
  }

  std::uint64_t next_u64() { return splitmix64(state_); }

  // uniform in [0, 1), 53-bit mantissa
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // unbiased bounded draw by rejection
  std::uint64_t bounded(std::uint64_t n) {
    if (n <= 1) return 0;
    std::uint64_t threshold = (~std::uint64_t{0} - n + 1) % n;
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Box-Muller; one value per call, spare cached
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = next_double();
    } while (u1 <= 0.0);
    u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  template <class Container>
  void shuffle(Container& v) {  // Fisher-Yates
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      std::size_t j = static_cast<std::size_t>(bounded(i + 1));
      std::swap(v[i], v[j]);
    }
  }

 private:
  static std::uint64_t splitmix64_mix(std::uint64_t s) {
    return splitmix64(s);
  }

  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// deterministic permutation of [0, n) controlled by (seed, epoch)
inline std::vector<std::uint32_t> epoch_permutation(std::uint64_t seed,
                                                    std::uint64_t epoch,
                                                    std::size_t n) {
  std::vector<std::uint32_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<std::uint32_t>(i);
  rng r = rng::stream(fnv1a64("shuffle", seed), epoch);
  r.shuffle(idx);
  return idx;
}

// Kaiming-uniform fill: U(-b, b) with b = sqrt(6 / fan_in)
template <class S>
void kaiming_uniform(mat<S>& w, rng& r) {
  double bound = std::sqrt(6.0 / static_cast<double>(w.cols()));
  for (Eigen::Index c = 0; c < w.cols(); ++c)
    for (Eigen::Index rr = 0; rr < w.rows(); ++rr)
      w(rr, c) = static_cast<S>(r.uniform(-bound, bound));
}

}  // namespace lpv
