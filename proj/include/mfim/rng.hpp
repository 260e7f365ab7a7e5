#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mfim {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Seed for a named sub-task; reruns with the same master seed reproduce every stream.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view task_path) {
    return splitmix64(master ^ splitmix64(fnv1a(task_path)));
}

inline Rng make_rng(std::uint64_t master, std::string_view task_path) {
    return Rng(derive_seed(master, task_path));
}

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace mfim
