#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <utility>

namespace mffbsde::rng {

// Counter-based generator (Philox 4x32, 10 rounds). Every draw is a pure
// function of (seed, stream, ctr_a, ctr_b, block), so simulations are
// reproducible for any worker count and any evaluation order.

namespace detail {

inline constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
inline constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
inline constexpr std::uint32_t kMul0 = 0xD2511F53u;
inline constexpr std::uint32_t kMul1 = 0xCD9E8D57u;

inline void mul_hi_lo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

}  // namespace detail

using Block = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

inline Block philox4x32(Block ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
        std::uint32_t hi0, lo0, hi1, lo1;
        detail::mul_hi_lo(detail::kMul0, ctr[0], hi0, lo0);
        detail::mul_hi_lo(detail::kMul1, ctr[2], hi1, lo1);
        ctr = Block{hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += detail::kWeyl0;
        key[1] += detail::kWeyl1;
    }
    return ctr;
}

/// Logical sub-stream tags. Combined with a population index they keep every
/// consumer of randomness on a disjoint counter range.
enum class Stream : std::uint32_t {
    Forward = 1,    // Brownian increments (ctr_a = particle, ctr_b = step)
    Slice = 2,      // random projection directions (ctr_a = projection)
    Mix = 3,        // fixed-point mixing draws (ctr_a = iteration, ctr_b = grid point)
    Validate = 4,   // assumption probes
    Deviation = 5,  // equilibrium perturbations (ctr_a = deviation index)
    Experiment = 6  // test-local experiments
};

inline std::uint32_t stream_id(Stream tag, std::uint32_t population = 0) {
    return (static_cast<std::uint32_t>(tag) << 24) | (population & 0x00FFFFFFu);
}

inline Block raw_block(std::uint64_t seed, std::uint32_t stream, std::uint32_t ctr_a,
                       std::uint32_t ctr_b, std::uint32_t block) {
    const Key key{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    return philox4x32(Block{stream, ctr_a, ctr_b, block}, key);
}

/// Maps two 32-bit lanes onto the open interval (0, 1). 52-bit resolution so
/// both endpoints stay representable and strictly excluded.
inline double to_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32) | lo;
    return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

/// Two independent standard normals per counter block (Box-Muller).
inline std::pair<double, double> normal_pair(std::uint64_t seed, std::uint32_t stream,
                                             std::uint32_t ctr_a, std::uint32_t ctr_b,
                                             std::uint32_t block) {
    const Block x = raw_block(seed, stream, ctr_a, ctr_b, block);
    const double u1 = to_unit(x[0], x[1]);
    const double u2 = to_unit(x[2], x[3]);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(theta), r * std::sin(theta)};
}

inline double uniform(std::uint64_t seed, std::uint32_t stream, std::uint32_t ctr_a,
                      std::uint32_t ctr_b, std::uint32_t block) {
    const Block x = raw_block(seed, stream, ctr_a, ctr_b, block);
    return to_unit(x[0], x[1]);
}

/// Fills out with standard normals drawn from consecutive blocks.
inline void fill_normals(std::uint64_t seed, std::uint32_t stream, std::uint32_t ctr_a,
                         std::uint32_t ctr_b, std::span<double> out) {
    std::uint32_t block = 0;
    std::size_t i = 0;
    while (i < out.size()) {
        const auto [n0, n1] = normal_pair(seed, stream, ctr_a, ctr_b, block++);
        out[i++] = n0;
        if (i < out.size()) out[i++] = n1;
    }
}

}  // namespace mffbsde::rng
