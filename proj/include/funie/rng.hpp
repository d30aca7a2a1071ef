#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace funie {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001B3ULL;
    }
    return h;
}

/// Independent per-purpose seed: hash(root, label, index).
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view label, std::uint64_t index = 0) {
    return splitmix64(splitmix64(root ^ fnv1a(label)) + index);
}

inline std::mt19937_64 make_rng(std::uint64_t root, std::string_view label, std::uint64_t index = 0) {
    return std::mt19937_64(derive_seed(root, label, index));
}

}  // namespace funie
