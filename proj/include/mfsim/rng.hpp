#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>

namespace mfsim {

// ---------------------------------------------------------------------------
// Counter-based RNG: Philox4x32-10 (constants from the Random123 reference).
// Streams are keyed by (seed, replica, particle, coordinate, purpose), so a
// stream's output depends only on those identifiers and never on thread
// count or generation order. One block = 4 x u32 = 2 uniform doubles = one
// Box-Muller pair of standard normals.
// ---------------------------------------------------------------------------

namespace detail {

inline void philox_round(std::array<std::uint32_t, 4>& ctr,
                         std::array<std::uint32_t, 2>& key) {
    constexpr std::uint64_t M0 = 0xD2511F53ULL;
    constexpr std::uint64_t M1 = 0xCD9E8D57ULL;
    const std::uint64_t p0 = M0 * ctr[0];
    const std::uint64_t p1 = M1 * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += 0x9E3779B9U;
    key[1] += 0xBB67AE85U;
}

inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
    for (int r = 0; r < 10; ++r) philox_round(ctr, key);
    return ctr;
}

// uniform in (0,1), 53 bits from two u32 words; never returns 0 or 1
inline double u01(std::uint32_t a, std::uint32_t b) {
    const std::uint64_t v = (static_cast<std::uint64_t>(a) << 32) | b;
    return static_cast<double>(v >> 11) * 0x1.0p-53 + 0x1.0p-54;
}

}  // namespace detail

// Stream purposes; folded into the counter so streams for different roles
// never collide even under equal seeds.
enum class StreamPurpose : std::uint32_t {
    Noise = 0,
    Init = 1,
    AuxNoise = 2,
    AuxInit = 3,
    Freq = 4,
    Generic = 5,
};

struct StreamKey {
    std::uint64_t seed = 0;
    std::uint32_t replica = 0;
    std::uint32_t particle = 0;
    std::uint32_t coordinate = 0;
    StreamPurpose purpose = StreamPurpose::Generic;
};

// Sequential view of one keyed stream. Stateless per block: normal(k) and
// uniform(k) depend only on (key, k).
class GaussianStream {
public:
    explicit GaussianStream(const StreamKey& k)
        : key_{static_cast<std::uint32_t>(k.seed),
               static_cast<std::uint32_t>(k.seed >> 32)},
          prefix_{k.replica, k.particle,
                  (static_cast<std::uint32_t>(k.purpose) << 24) |
                      (k.coordinate & 0x00FFFFFFU)} {}

    // pair of independent N(0,1) variates for block index `block`
    std::array<double, 2> normal_pair(std::uint32_t block) const {
        const auto r = detail::philox4x32({prefix_[0], prefix_[1], prefix_[2], block}, key_);
        const double u1 = detail::u01(r[0], r[1]);
        const double u2 = detail::u01(r[2], r[3]);
        const double rad = std::sqrt(-2.0 * std::log(u1));
        const double ang = 6.283185307179586476925286766559 * u2;
        return {rad * std::cos(ang), rad * std::sin(ang)};
    }

    std::array<double, 2> uniform_pair(std::uint32_t block) const {
        const auto r = detail::philox4x32({prefix_[0], prefix_[1], prefix_[2], block}, key_);
        return {detail::u01(r[0], r[1]), detail::u01(r[2], r[3])};
    }

    void fill_normals(std::span<double> out) const {
        std::uint32_t block = 0;
        std::size_t i = 0;
        while (i < out.size()) {
            const auto z = normal_pair(block++);
            out[i++] = z[0];
            if (i < out.size()) out[i++] = z[1];
        }
    }

    void fill_uniforms(std::span<double> out) const {
        std::uint32_t block = 0;
        std::size_t i = 0;
        while (i < out.size()) {
            const auto u = uniform_pair(block++);
            out[i++] = u[0];
            if (i < out.size()) out[i++] = u[1];
        }
    }

private:
    std::array<std::uint32_t, 2> key_;
    std::array<std::uint32_t, 3> prefix_;
};

}  // namespace mfsim
