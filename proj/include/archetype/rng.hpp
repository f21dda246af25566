#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace archetype {

/// FNV-1a 64-bit hash; used to fold textual identifiers into seeds.
inline std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t hash = 14695981039346656037ULL;
  for (unsigned char byte : text) {
    hash ^= byte;
    hash *= 1099511628211ULL;
  }
  return hash;
}

/// SplitMix64 finalizer; spreads correlated seed inputs across the full
/// 64-bit range.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Derives the per-column stream seed from the run seed and the column id.
/// Every sampling decision for a column draws from a generator seeded this
/// way, which makes results independent of column order and thread count.
inline std::uint64_t mix_seed(std::uint64_t run_seed, std::string_view column_id) {
  return splitmix64(run_seed ^ fnv1a64(column_id));
}

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) built from the top 53 bits of one draw.
/// Implemented by hand (not via std::uniform_real_distribution) so the
/// byte stream is identical across standard libraries.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform index in [0, n) via the Lemire multiply-shift reduction.  The
/// bias is below n / 2^64, which is negligible for the pool sizes used
/// here, and the mapping is fixed so streams replay bit-exactly.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  using u128 = unsigned __int128;
  return static_cast<std::size_t>((static_cast<u128>(rng()) * n) >> 64);
}

}  // namespace archetype
