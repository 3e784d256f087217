#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "loadrec/errors.hpp"

namespace loadrec {

// Deterministic random stream. mt19937_64 seeded through std::seed_seq, both
// of which are algorithmically pinned by the standard, so identical
// (seed, stream) pairs produce identical draws on every platform.
//
// Distinct logical streams (base profile, PV, EV placement, ...) derive from
// the same user seed with different stream tags, so adding draws to one
// stream never perturbs another.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::seed_seq seq{
        static_cast<std::uint32_t>(seed & 0xffffffffULL),
        static_cast<std::uint32_t>(seed >> 32),
        static_cast<std::uint32_t>(stream & 0xffffffffULL),
        static_cast<std::uint32_t>(stream >> 32),
    };
    gen_.seed(seq);
  }

  std::uint64_t raw() { return gen_(); }

  // Uniform on [0, 1) with 53-bit resolution. Implemented directly instead of
  // std::uniform_real_distribution, whose output is not pinned across
  // standard libraries.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [lo, hi], both inclusive (rejection sampling).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) throw ValidationError("uniform_int: empty range");
    const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
    if (range == 0) return static_cast<std::int64_t>(gen_());  // full 64-bit span
    const std::uint64_t reject_below = (0 - range) % range;
    std::uint64_t x = gen_();
    while (x < reject_below) x = gen_();
    return lo + static_cast<std::int64_t>(x % range);
  }

  // Fisher-Yates draw of k distinct values from {0, ..., n-1}.
  std::vector<int> sample_without_replacement(int n, int k) {
    if (k < 0 || k > n) throw ValidationError("sample_without_replacement: k out of range");
    std::vector<int> pool(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
    for (int i = 0; i < k; ++i) {
      const auto j = static_cast<std::size_t>(uniform_int(i, n - 1));
      std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
    }
    pool.resize(static_cast<std::size_t>(k));
    return pool;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace loadrec
