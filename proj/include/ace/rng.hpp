#pragma once

#include <cstdint>
#include <random>

namespace ace {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Named random streams derived from one master seed.
enum class Stream : std::uint64_t {
    collector = 1,  // index = environment worker
    replay = 2,
    evaluation = 3,  // index = episode
    init = 4,
    update = 5,
    policy = 6,            // index = environment worker
    evaluation_order = 7,  // index = episode
};

/// seed(master, stream, index) = splitmix64(splitmix64(master + stream) + index).
/// Each (stream, index) pair is independent of how many other indices exist,
/// so adding collector workers never perturbs the streams of existing ones.
inline std::uint64_t derive_seed(std::uint64_t master, Stream stream, std::uint64_t index = 0) {
    return splitmix64(splitmix64(master + static_cast<std::uint64_t>(stream)) + index);
}

inline Rng make_rng(std::uint64_t master, Stream stream, std::uint64_t index = 0) {
    return Rng(derive_seed(master, stream, index));
}

inline double uniform01(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi_inclusive) {
    return std::uniform_int_distribution<int>(lo, hi_inclusive)(rng);
}

}  // namespace ace
