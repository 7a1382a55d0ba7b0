#pragma once

#include <cstdint>
#include <span>
#include <utility>

namespace llmcipher {

/// PCG32 (XSH-RR 64/32) as defined by the pcg-random.org reference
/// implementation. Sequences are identical on every platform.
class Pcg32 {
public:
    Pcg32(std::uint64_t seed, std::uint64_t stream) noexcept { reseed(seed, stream); }

    void reseed(std::uint64_t seed, std::uint64_t stream) noexcept {
        state_ = 0;
        inc_ = (stream << 1u) | 1u;
        next_u32();
        state_ += seed;
        next_u32();
    }

    std::uint32_t next_u32() noexcept {
        const std::uint64_t old = state_;
        state_ = old * kMultiplier + inc_;
        const auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
        const auto rot = static_cast<std::uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
    }

    /// Uniform integer in [0, bound) without modulo bias (reference boundedrand).
    std::uint32_t bounded(std::uint32_t bound) noexcept {
        const std::uint32_t threshold = (-bound) % bound;
        for (;;) {
            const std::uint32_t r = next_u32();
            if (r >= threshold) return r % bound;
        }
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() noexcept {
        const std::uint64_t hi = next_u32() >> 5u;  // 27 bits
        const std::uint64_t lo = next_u32() >> 6u;  // 26 bits
        return static_cast<double>((hi << 26u) | lo) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Standard normal draw (Box-Muller, one value per call).
    double normal() noexcept;

    template <typename T>
    void shuffle(std::span<T> items) noexcept {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = bounded(static_cast<std::uint32_t>(i));
            using std::swap;
            swap(items[i - 1], items[j]);
        }
    }

private:
    static constexpr std::uint64_t kMultiplier = 6364136223846793005ULL;
    std::uint64_t state_ = 0;
    std::uint64_t inc_ = 0;
};

}  // namespace llmcipher
