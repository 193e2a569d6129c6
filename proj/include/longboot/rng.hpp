#pragma once

// Counter-based random streams.
//
// Every random draw in the library comes from a Philox4x32-10 stream addressed
// by (master seed, level, replicate, subject). Two streams with different
// addresses never share a counter block, so work units can be evaluated in any
// order, on any thread, and still reproduce bit for bit.

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>

namespace longboot {

namespace detail {

inline std::uint32_t mulhilo32(std::uint32_t a, std::uint32_t b, std::uint32_t& hi) {
    const std::uint64_t product = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(product >> 32);
    return static_cast<std::uint32_t>(product);
}

}  // namespace detail

/// Philox4x32 with 10 rounds (Salmon et al. 2011).
inline std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                                  std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t m0 = 0xD2511F53u;
    constexpr std::uint32_t m1 = 0xCD9E8D57u;
    constexpr std::uint32_t w0 = 0x9E3779B9u;
    constexpr std::uint32_t w1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += w0;
            key[1] += w1;
        }
        std::uint32_t hi0 = 0;
        std::uint32_t hi1 = 0;
        const std::uint32_t lo0 = detail::mulhilo32(m0, ctr[0], hi0);
        const std::uint32_t lo1 = detail::mulhilo32(m1, ctr[2], hi1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
}

/// splitmix64 finalizer; used to derive child seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Child seed for an independent family of streams (e.g. one per subsample).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag,
                                    std::uint64_t index = 0) noexcept {
    return mix64(mix64(seed ^ mix64(tag)) + index);
}

/// Stream levels. The bootstrap uses outer/inner; other consumers get their own.
enum class StreamLevel : std::uint32_t {
    outer = 1,
    inner = 2,
    simulate = 3,
    perturb = 4,
    misc = 5,
};

/**
 * Address of one random stream.
 *
 * Counter layout: word 0 is the block index within the stream, word 1 the
 * subject, word 2 the replicate, word 3 packs level (4 bits), retry attempt
 * (4 bits) and sub-replicate (24 bits).
 */
struct StreamKey {
    std::uint64_t seed = 0;
    StreamLevel level = StreamLevel::misc;
    std::uint32_t replicate = 0;
    std::uint32_t sub_replicate = 0;
    std::uint32_t attempt = 0;
    std::uint32_t subject = 0;

    [[nodiscard]] StreamKey with_subject(std::uint32_t s) const noexcept {
        StreamKey k = *this;
        k.subject = s;
        return k;
    }
};

/// UniformRandomBitGenerator over one Philox stream.
class PhiloxStream {
public:
    using result_type = std::uint32_t;

    explicit PhiloxStream(const StreamKey& key) noexcept
        : key_{static_cast<std::uint32_t>(key.seed), static_cast<std::uint32_t>(key.seed >> 32)},
          ctr_{0u, key.subject, key.replicate,
               (static_cast<std::uint32_t>(key.level) & 0xFu) << 28 | (key.attempt & 0xFu) << 24 |
                   (key.sub_replicate & 0xFFFFFFu)} {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        if (used_ == 4) {
            block_ = philox4x32_10(ctr_, key_);
            ++ctr_[0];
            used_ = 0;
        }
        return block_[used_++];
    }

private:
    std::array<std::uint32_t, 2> key_;
    std::array<std::uint32_t, 4> ctr_;
    std::array<std::uint32_t, 4> block_{};
    int used_ = 4;
};

/// Unbiased integer in [0, bound) by Lemire's multiply-and-reject. bound > 0.
template <class Urbg>
std::uint32_t uniform_below(Urbg& rng, std::uint32_t bound) {
    std::uint64_t product = static_cast<std::uint64_t>(rng()) * bound;
    auto low = static_cast<std::uint32_t>(product);
    if (low < bound) {
        const std::uint32_t threshold = (0u - bound) % bound;
        while (low < threshold) {
            product = static_cast<std::uint64_t>(rng()) * bound;
            low = static_cast<std::uint32_t>(product);
        }
    }
    return static_cast<std::uint32_t>(product >> 32);
}

/// Double in [0, 1) with 53 random bits.
template <class Urbg>
double uniform01(Urbg& rng) {
    const std::uint64_t hi = rng() >> 5;
    const std::uint64_t lo = rng() >> 6;
    return static_cast<double>(hi * 67108864ull + lo) * 0x1.0p-53;
}

}  // namespace longboot
