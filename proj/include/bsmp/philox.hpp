#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>

namespace bsmp {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11). A stream is
/// identified by its key; the counter addresses blocks of four 32-bit words,
/// so any draw can be computed without generating the ones before it.
class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter block(Counter ctr, Key key)
    {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += kWeyl0;
                key[1] += kWeyl1;
            }
            const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const auto lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const auto lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85;
};

/// Gaussian stream keyed by (seed, stream id). Draw j is a pure function of
/// (seed, stream, j).
class GaussianStream {
public:
    GaussianStream(std::uint64_t seed, std::uint64_t stream)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          stream_(stream)
    {
    }

    /// Two standard normals from block `index` (Box-Muller).
    std::pair<double, double> normal_pair(std::uint64_t index) const
    {
        const auto [u1, u2] = uniform_pair(index);
        const double radius = std::sqrt(-2.0 * std::log(1.0 - u1));  // 1 - u1 in (0, 1]
        const double angle = 2.0 * std::numbers::pi * u2;
        return {radius * std::cos(angle), radius * std::sin(angle)};
    }

    /// Two uniforms in [0, 1) with 53-bit resolution from block `index`.
    std::pair<double, double> uniform_pair(std::uint64_t index) const
    {
        const Philox4x32::Counter ctr{static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                                      static_cast<std::uint32_t>(stream_),
                                      static_cast<std::uint32_t>(stream_ >> 32)};
        const auto out = Philox4x32::block(ctr, key_);
        return {to_unit(out[0], out[1]), to_unit(out[2], out[3])};
    }

    /// Sequential access for code that just wants the next draw.
    double next_normal()
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const auto [a, b] = normal_pair(cursor_++);
        spare_ = b;
        has_spare_ = true;
        return a;
    }

    double next_uniform()
    {
        if (has_spare_uniform_) {
            has_spare_uniform_ = false;
            return spare_uniform_;
        }
        const auto [a, b] = uniform_pair(uniform_cursor_++ | (std::uint64_t{1} << 63));
        spare_uniform_ = b;
        has_spare_uniform_ = true;
        return a;
    }

private:
    static double to_unit(std::uint32_t a, std::uint32_t b)
    {
        return ((a >> 5) * 67108864.0 + (b >> 6)) * (1.0 / 9007199254740992.0);
    }

    Philox4x32::Key key_;
    std::uint64_t stream_;
    std::uint64_t cursor_ = 0;
    std::uint64_t uniform_cursor_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
    double spare_uniform_ = 0.0;
    bool has_spare_uniform_ = false;
};

}  // namespace bsmp
