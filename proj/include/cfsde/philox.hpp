#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace cfsde {

// Philox4x32-10 keyed counter block.  The n-th block is a pure function of
// (key, counter), so any cell of the noise array can be produced on any
// thread without shared state and without generating its predecessors.
struct Philox4x32 {
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
    static constexpr std::uint32_t kMult0 = 0xD2511F53u;
    static constexpr std::uint32_t kMult1 = 0xCD9E8D57u;

    static Counter block(Counter ctr, Key key) noexcept {
        for (int round = 0; round < 10; ++round) {
            ctr = single_round(ctr, key);
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        return ctr;
    }

private:
    static Counter single_round(const Counter& c, const Key& k) noexcept {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kMult0) * c[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kMult1) * c[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }
};

namespace detail {

// 53-bit uniform in [0,1) from two lanes.
inline double lanes_to_unit(std::uint32_t hi, std::uint32_t lo) noexcept {
    const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32) | lo;
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

}  // namespace detail

// Standard normal for cell (path, step) under master_seed, via Box-Muller on
// one Philox block.  u1 is reflected into (0,1] so the logarithm is finite;
// |z| is capped near 8.6 by the 53-bit resolution.
inline double normal_variate(std::uint64_t master_seed, std::uint64_t path,
                             std::uint64_t step) noexcept {
    const Philox4x32::Key key{static_cast<std::uint32_t>(master_seed),
                              static_cast<std::uint32_t>(master_seed >> 32)};
    const Philox4x32::Counter ctr{
        static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32),
        static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32)};
    const auto r = Philox4x32::block(ctr, key);
    const double u1 = 1.0 - detail::lanes_to_unit(r[0], r[1]);
    const double u2 = detail::lanes_to_unit(r[2], r[3]);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi_v<double> * u2);
}

}  // namespace cfsde
