#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace ebcc {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Mixes a tuple of keys into one seed. Streams for different keys are
// unrelated, so (seed, rep, j, purpose)-keyed work gives the same numbers no
// matter which thread runs it or in what order.
inline std::uint64_t stream_seed(std::initializer_list<std::uint64_t> keys) {
    std::uint64_t h = 0x243f6a8885a308d3ULL;
    for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k));
    return h;
}

inline Rng make_stream(std::initializer_list<std::uint64_t> keys) { return Rng(stream_seed(keys)); }

// Purpose tags that keep streams of one replication apart.
enum Purpose : std::uint64_t {
    kData = 1,
    kHoldout = 2,
    kKnockoffs = 3,
    kBaseline = 4,
    kBoost = 5,
    kBoostMarginal = 6,
};

}  // namespace ebcc
