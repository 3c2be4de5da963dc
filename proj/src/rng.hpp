// Counter-based random numbers (Philox2x64, 10 rounds). A draw is a pure
// function of (key, counter), so per-particle streams are reproducible
// independent of scheduling.
#pragma once

#include <cmath>
#include <cstdint>
#include <utility>

namespace fpmv::rng {

struct Block {
    std::uint64_t x = 0, y = 0;
};

inline Block philox2x64(std::uint64_t key, std::uint64_t c0, std::uint64_t c1) {
    constexpr std::uint64_t kMul = 0xD2B74407B1CE6E93ULL;
    constexpr std::uint64_t kWeyl = 0x9E3779B97F4A7C15ULL;
    std::uint64_t x0 = c0, x1 = c1, k = key;
    for (int round = 0; round < 10; ++round) {
        unsigned __int128 prod = static_cast<unsigned __int128>(kMul) * x0;
        std::uint64_t hi = static_cast<std::uint64_t>(prod >> 64);
        std::uint64_t lo = static_cast<std::uint64_t>(prod);
        x0 = hi ^ k ^ x1;
        x1 = lo;
        k += kWeyl;
    }
    return {x0, x1};
}

// uniform in (0, 1]
inline double u01(std::uint64_t v) { return static_cast<double>((v >> 11) + 1) * 0x1.0p-53; }

// uniform in [0, 1)
inline double u01_open(std::uint64_t v) { return static_cast<double>(v >> 11) * 0x1.0p-53; }

// standard normal pair (Box-Muller)
inline std::pair<double, double> normal_pair(Block b) {
    double r = std::sqrt(-2.0 * std::log(u01(b.x)));
    double a = 6.283185307179586476925286766559 * u01_open(b.y);
    return {r * std::cos(a), r * std::sin(a)};
}

}  // namespace fpmv::rng
