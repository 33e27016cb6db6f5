#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace clinlm {

// std distributions are implementation-defined; these helpers keep every
// seeded stream identical across standard libraries.
using Rng = std::mt19937_64;

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform_symmetric(Rng& rng, double half_width) {
  return (2.0 * uniform01(rng) - 1.0) * half_width;
}

/// Uniform integer in [0, n). Rejection sampling removes modulo bias.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t rem = (Rng::max() % n + 1) % n;  // 2^64 mod n
  while (true) {
    const std::uint64_t x = rng();
    if (rem == 0 || x <= Rng::max() - rem) return x % n;
  }
}

template <class T>
void shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_index(rng, i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace clinlm
