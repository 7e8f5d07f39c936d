#pragma once

#include <cstdint>
#include <cstddef>
#include <cmath>
#include <numbers>
#include <vector>

// Deterministic pseudo-randomness for every seeded operation in the library.
//
// Generator: SplitMix64 (Steele, Lea & Flood's algorithm with Vigna's mixing
// constants). 64-bit state, one additive step + finalizer per draw. Chosen
// because the full algorithm fits in ten lines and can be re-implemented
// exactly in any language, so runs are reproducible across implementations
// given the same seed and draw order.
//
// Derived quantities are pinned as follows:
//   u64      -> next_u64(), the raw SplitMix64 output
//   [0,1)    -> (next_u64() >> 11) * 2^-53
//   [a,b)    -> a + (b-a) * uniform01()
//   index<n  -> next_u64() % n  (modulo bias is irrelevant for n << 2^64)
//   normal   -> Box-Muller: sqrt(-2 ln u1) * cos(2 pi u2) with u1 = 1 -
//               uniform01() (so u1 > 0), u2 = uniform01(). Exactly two u64
//               draws per normal; the sine mate is discarded.
//
// Independent streams for independent purposes (weight init, shuffling,
// attacks, ...) are derived with derive_seed(); toggling one consumer never
// perturbs the draws seen by another.

namespace freqat {

class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform01();
    }

    std::size_t index(std::size_t n) {
        return static_cast<std::size_t>(next_u64() % static_cast<std::uint64_t>(n));
    }

    double normal() {
        const double u1 = 1.0 - uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t state_;
};

// SplitMix64 finalizer as a standalone hash.
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Seed for an independent substream. Used twice in a row this also yields
// per-item seeds, e.g. derive_seed(derive_seed(seed, kAttackStream), i).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
    return mix64(seed ^ (0x9E3779B97F4A7C15ULL * (salt + 1)));
}

// Purpose salts for the streams the library owns.
inline constexpr std::uint64_t kInitStream = 1;
inline constexpr std::uint64_t kShuffleStream = 2;
inline constexpr std::uint64_t kAttackStream = 3;
inline constexpr std::uint64_t kDataStream = 4;
inline constexpr std::uint64_t kEvalStream = 5;

// Fisher-Yates permutation of 0..n-1: for i = n-1 .. 1, j = index(i+1), swap.
inline std::vector<std::size_t> shuffled_indices(std::size_t n, SplitMix64& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = rng.index(i);
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

} // namespace freqat
