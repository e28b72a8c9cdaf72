#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace salt::rng {

// All randomness in the library is drawn through these helpers on top of
// std::mt19937_64, whose output stream is fully specified by the standard.
// Seeded results are therefore portable across platforms and compilers.

/// Uniform double in [0, 1) using the top 53 bits of one draw.
inline double uniform_unit(std::mt19937_64& g) {
    return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n). One draw, reduced modulo n. The modulo bias is
/// below 2^-53 for any n used here and keeps the stream layout trivial.
inline std::uint64_t below(std::mt19937_64& g, std::uint64_t n) {
    return g() % n;
}

/// Standard normal deviate via Box-Muller (cosine branch, two draws per call).
inline double gaussian(std::mt19937_64& g) {
    double u1 = uniform_unit(g);
    if (u1 <= 0.0)
        u1 = 0x1.0p-53;
    const double u2 = uniform_unit(g);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

} // namespace salt::rng
