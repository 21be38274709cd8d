#pragma once

// Named, indexed random streams derived from one master seed.
//
// Every stochastic component draws from its own std::mt19937_64 whose seed is
// a SplitMix64 hash of (master seed, stream name, index). A realization's
// output therefore depends only on its own stream, never on scheduling.

#include <cstdint>
#include <random>
#include <string_view>

namespace wavefront::rng {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

inline constexpr std::uint64_t stream_seed(std::uint64_t master, std::string_view name,
                                           std::uint64_t index = 0) noexcept {
    return splitmix64(splitmix64(master ^ fnv1a64(name)) + splitmix64(index + 1));
}

using Engine = std::mt19937_64;

inline Engine make_stream(std::uint64_t master, std::string_view name, std::uint64_t index = 0) {
    return Engine{stream_seed(master, name, index)};
}

} // namespace wavefront::rng
