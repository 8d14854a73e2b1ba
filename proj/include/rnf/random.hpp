#pragma once

#include <cstdint>
#include <random>

namespace rnf {

using Rng = std::mt19937_64;

// Mixes (root, stream, index) into an independent 64-bit seed (splitmix64 finalizer).
// Lets parallel workers seed per-trial generators without sharing state.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream, std::uint64_t index = 0) {
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return mix(mix(mix(root) ^ stream) ^ index);
}

inline Rng make_rng(std::uint64_t root, std::uint64_t stream, std::uint64_t index = 0) {
    return Rng(derive_seed(root, stream, index));
}

// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

} // namespace rnf
