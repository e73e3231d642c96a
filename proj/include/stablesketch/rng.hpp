#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace stablesketch {

/// Philox4x32-10 block function (Salmon et al., "Parallel random numbers:
/// as easy as 1, 2, 3"). Stateless: maps (counter, key) to 128 random bits.
struct Philox4x32 {
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    static constexpr Counter apply(Counter ctr, Key key) noexcept {
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const auto lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const auto lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        return ctr;
    }
};

/// Map 64 random bits to a double in the open interval (0, 1). The top
/// value 1 - 2^-54 is not representable and rounds up, hence the clamp.
constexpr double bits_to_open_unit(std::uint64_t bits) noexcept {
    const double u = (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
    return u < 1.0 ? u : 0x1.fffffffffffffp-1;
}

/// SplitMix64 finalizer; used to derive stream ids from structured indices.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Two uniform variates on (0, 1) produced by one Philox block.
struct UniformPair {
    double first;
    double second;
};

/// A reproducible random stream keyed by (seed, stream_id).
///
/// The n-th block of a stream depends only on (seed, stream_id, n), so any
/// worker can regenerate any part of any stream without coordination.
class RngStream {
public:
    constexpr RngStream(std::uint64_t seed, std::uint64_t stream_id, std::uint64_t counter = 0) noexcept
        : seed_(seed), stream_id_(stream_id), counter_(counter) {}

    constexpr std::uint64_t seed() const noexcept { return seed_; }
    constexpr std::uint64_t stream_id() const noexcept { return stream_id_; }
    constexpr std::uint64_t counter() const noexcept { return counter_; }

    /// Raw 128-bit block at `counter`; does not advance the stream.
    constexpr Philox4x32::Counter raw_block_at(std::uint64_t counter) const noexcept {
        const Philox4x32::Counter ctr = {
            static_cast<std::uint32_t>(stream_id_), static_cast<std::uint32_t>(stream_id_ >> 32),
            static_cast<std::uint32_t>(counter), static_cast<std::uint32_t>(counter >> 32)};
        const Philox4x32::Key key = {static_cast<std::uint32_t>(seed_),
                                     static_cast<std::uint32_t>(seed_ >> 32)};
        return Philox4x32::apply(ctr, key);
    }

    /// Two uniforms from the block at `counter`; does not advance the stream.
    constexpr UniformPair block_at(std::uint64_t counter) const noexcept {
        const auto out = raw_block_at(counter);
        const std::uint64_t a = (std::uint64_t{out[0]} << 32) | out[1];
        const std::uint64_t b = (std::uint64_t{out[2]} << 32) | out[3];
        return {bits_to_open_unit(a), bits_to_open_unit(b)};
    }

    constexpr std::uint64_t next_bits() noexcept {
        const auto out = raw_block_at(counter_++);
        return (std::uint64_t{out[0]} << 32) | out[1];
    }

    constexpr UniformPair next_pair() noexcept { return block_at(counter_++); }

    /// A child stream whose id is derived from this stream's id and `index`.
    constexpr RngStream split(std::uint64_t index) const noexcept {
        return RngStream(seed_, mix64(stream_id_ ^ mix64(index + 0x632be59bd9b4e019ull)));
    }

    friend constexpr bool operator==(const RngStream&, const RngStream&) = default;

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::uint64_t counter_;
};

/// UniformRandomBitGenerator adapter so standard distributions can draw from
/// an RngStream. Each call consumes one block and returns its first 64 bits.
class RngStreamEngine {
public:
    using result_type = std::uint64_t;

    explicit RngStreamEngine(RngStream stream) noexcept : stream_(stream) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept { return stream_.next_bits(); }

    const RngStream& stream() const noexcept { return stream_; }

private:
    RngStream stream_;
};

}  // namespace stablesketch
