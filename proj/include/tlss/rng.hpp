#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace tlss {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view tag)
{
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

// Derives an independent seed for a named purpose. Streams with different
// tags never share state, so renaming one leaves the others untouched.
inline std::uint64_t stream_seed(std::uint64_t global_seed, std::string_view purpose)
{
    return splitmix64(splitmix64(global_seed) ^ fnv1a(purpose));
}

inline Rng make_stream(std::uint64_t global_seed, std::string_view purpose)
{
    return Rng(stream_seed(global_seed, purpose));
}

}  // namespace tlss
