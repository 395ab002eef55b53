#pragma once

#include <cstdint>
#include <random>

namespace dynhat {

// splitmix64 step; advances `state` and returns the next output.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Derives a decorrelated seed for stream `stream` of a base seed. Used
// everywhere a component needs several independent deterministic RNG
// streams from one user-facing seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t s = seed ^ (0xbf58476d1ce4e5b9ULL * (stream + 0x9e3779b97f4a7c15ULL));
    splitmix64(s);
    return splitmix64(s);
}

inline std::mt19937_64 make_rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    const std::uint64_t a = splitmix64(s);
    return std::mt19937_64(a);
}

// Uniform index in [0, n). Modulo bias is negligible for the small n used
// here and keeps the draw sequence independent of the standard library's
// distribution implementation.
inline std::size_t pick_index(std::mt19937_64& rng, std::size_t n) {
    return static_cast<std::size_t>(rng() % n);
}

// FNV-1a over raw bytes.
inline std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace dynhat
