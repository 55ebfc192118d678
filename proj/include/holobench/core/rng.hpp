#pragma once

#include <cstdint>
#include <numbers>
#include <random>

namespace holo {

using Rng = std::mt19937_64;

// Independent generator for (seed, stream, tag). Work split across records or
// threads uses one substream per item so results do not depend on scheduling.
inline Rng substream(std::uint64_t seed, std::uint64_t stream, std::uint64_t tag = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
    return Rng(seq);
}

// Uniform in [0, 1). Uses the top 53 bits so the result never rounds up to 1.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

inline double standard_normal(Rng& rng) {
    return std::normal_distribution<double>(0.0, 1.0)(rng);
}

// Uniform phase in [0, 2pi), representable as float and strictly below 2pi.
inline float uniform_phase_f32(Rng& rng) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    float p = static_cast<float>(two_pi * uniform01(rng));
    if (static_cast<double>(p) >= two_pi) p = 0.0f;
    return p;
}

} // namespace holo
