#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace fiberpath {

// Philox4x32-10 (Salmon et al., SC'11). Counter-based: block(ctr, key) is a
// pure function, so any substream can be regenerated without replaying others.
struct Philox4x32 {
    using counter_type = std::array<std::uint32_t, 4>;
    using key_type = std::array<std::uint32_t, 2>;

    static counter_type block(counter_type ctr, key_type key)
    {
        constexpr std::uint32_t m0 = 0xD2511F53u, m1 = 0xCD9E8D57u;
        constexpr std::uint32_t w0 = 0x9E3779B9u, w1 = 0xBB67AE85u;
        for (int r = 0; r < 10; ++r) {
            if (r > 0) {
                key[0] += w0;
                key[1] += w1;
            }
            const std::uint64_t p0 = std::uint64_t(m0) * ctr[0];
            const std::uint64_t p1 = std::uint64_t(m1) * ctr[2];
            ctr = {std::uint32_t(p1 >> 32) ^ ctr[1] ^ key[0], std::uint32_t(p1),
                   std::uint32_t(p0 >> 32) ^ ctr[3] ^ key[1], std::uint32_t(p0)};
        }
        return ctr;
    }
};

/**
 * Normal deviates for one (seed, stream, lane). Block j of the stream uses
 * counter (j, lane, stream_lo, stream_hi) and key (seed_lo, seed_hi); each block
 * yields two Box-Muller normals.
 */
class NormalStream {
public:
    NormalStream(std::uint64_t seed, std::uint64_t stream, std::uint32_t lane)
        : key_{std::uint32_t(seed), std::uint32_t(seed >> 32)},
          lane_(lane), stream_(stream)
    {
    }

    double operator()()
    {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const auto w = Philox4x32::block(
            {block_++, lane_, std::uint32_t(stream_), std::uint32_t(stream_ >> 32)}, key_);
        const std::uint64_t a = (std::uint64_t(w[0]) << 32) | w[1];
        const std::uint64_t b = (std::uint64_t(w[2]) << 32) | w[3];
        constexpr double ulp = 0x1.0p-53;
        const double u1 = double((a >> 11) + 1) * ulp;  // (0, 1]
        const double u2 = double(b >> 11) * ulp;        // [0, 1)
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double ang = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(ang);
        have_spare_ = true;
        return r * std::cos(ang);
    }

private:
    Philox4x32::key_type key_;
    std::uint32_t lane_;
    std::uint64_t stream_;
    std::uint32_t block_ = 0;
    double spare_ = 0;
    bool have_spare_ = false;
};

}  // namespace fiberpath
