#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace thyme {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent, reproducible random stream for (seed, purpose, index).
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
    return std::mt19937_64(splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index));
}

/// Uniform double in [0, 1) derived purely from the inputs.
inline double hash_unit(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return static_cast<double>(splitmix64(splitmix64(splitmix64(a) ^ b) ^ c) >> 11) * 0x1.0p-53;
}

/// 64-bit FNV-1a; stable across platforms and runs.
inline std::uint64_t stable_hash(const char* data, std::size_t n) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= static_cast<unsigned char>(data[i]);
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Stream identifiers for make_rng.
enum : std::uint64_t {
    kStreamRadio = 1,
    kStreamMobility = 2,
    kStreamChurn = 3,
    kStreamProtocol = 4,
    kStreamTopology = 5,
    kStreamTrace = 6,
    kStreamQuery = 7,
};

}  // namespace thyme
