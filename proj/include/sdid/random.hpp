#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace sdid {

/// Seed for replicate streams. Stream k depends only on (seed, k), so draws
/// do not depend on thread count or execution order.
struct RngSpec {
    std::uint64_t seed = 0;

    std::mt19937_64 stream(std::uint64_t replicate) const {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(replicate), static_cast<std::uint32_t>(replicate >> 32)};
        return std::mt19937_64(seq);
    }
};

/// Uniform integer in [0, n). Rejection sampling on the raw 64-bit output;
/// std::uniform_int_distribution is implementation-defined.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % n;
}

}  // namespace sdid
