#ifndef MAST_RNG_HPP
#define MAST_RNG_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <unordered_map>
#include <vector>

#include "mast/errors.hpp"

namespace mast {

// Counter-based seeded random stream. Streams are cheap to derive from a
// master seed plus integer tags, so sampling at iteration t (or on node i)
// always reads from derive(master, t) / derive(master, i, t) and results do
// not depend on evaluation order or thread scheduling.
//
// The generator is SplitMix64; all distributions below are hand-rolled on
// top of its raw 64-bit output so sequences are identical across platforms
// and standard-library versions.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : state_(seed) {}

  static RngStream derive(std::uint64_t master, std::uint64_t a = 0,
                          std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t s = mix(master ^ 0x9e3779b97f4a7c15ull);
    s = mix(s ^ mix(a ^ 0xbf58476d1ce4e5b9ull));
    s = mix(s ^ mix(b ^ 0x94d049bb133111ebull));
    s = mix(s ^ mix(c ^ 0xd6e8feb86659fd93ull));
    return RngStream(s);
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix(state_);
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Unbiased uniform integer in [0, n). Rejection on the top of the range.
  std::uint64_t uniform_below(std::uint64_t n) {
    if (n == 0) throw Error("uniform_below(0)");
    const std::uint64_t threshold = (~n + 1) % n;  // 2^64 mod n
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  bool bernoulli(double p) { return uniform01() < p; }

  // Standard normal via Box-Muller; the spare value is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Uniform K-subset of {0, ..., n-1} via a partial Fisher-Yates shuffle:
  // exact uniform over subsets, O(k) expected workspace. The result is
  // sorted ascending so downstream accumulation order is deterministic.
  std::vector<int> subset_without_replacement(int n, int k) {
    if (k < 0 || k > n) throw Error("subset_without_replacement: k out of range");
    std::unordered_map<int, int> moved;
    moved.reserve(static_cast<std::size_t>(k) * 2);
    std::vector<int> picked(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
      const int j = i + static_cast<int>(uniform_below(static_cast<std::uint64_t>(n - i)));
      const auto at = [&](int idx) {
        auto it = moved.find(idx);
        return it == moved.end() ? idx : it->second;
      };
      const int vj = at(j);
      moved[j] = at(i);
      picked[static_cast<std::size_t>(i)] = vj;
    }
    std::sort(picked.begin(), picked.end());
    return picked;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace mast

#endif  // MAST_RNG_HPP
