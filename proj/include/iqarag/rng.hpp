#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace iqarag {

// High 64 bits of the 128-bit product a * b.
constexpr std::uint64_t mul_high64(std::uint64_t a, std::uint64_t b) noexcept {
    const std::uint64_t a_lo = a & 0xFFFFFFFFULL, a_hi = a >> 32;
    const std::uint64_t b_lo = b & 0xFFFFFFFFULL, b_hi = b >> 32;
    const std::uint64_t lo_lo = a_lo * b_lo;
    const std::uint64_t hi_lo = a_hi * b_lo;
    const std::uint64_t lo_hi = a_lo * b_hi;
    const std::uint64_t cross = (lo_lo >> 32) + (hi_lo & 0xFFFFFFFFULL) + lo_hi;
    return a_hi * b_hi + (hi_lo >> 32) + (cross >> 32);
}

// SplitMix64 (Steele, Lea & Flood). Fully specified, so seeded shuffles
// reproduce across platforms and language ports.
class SplitMix64 {
public:
    explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    constexpr std::uint64_t next() noexcept {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform integer in [0, bound) by 128-bit multiply-high.
    constexpr std::uint64_t below(std::uint64_t bound) noexcept {
        return mul_high64(next(), bound);
    }

private:
    std::uint64_t state_;
};

// Fisher-Yates, descending: for i = n-1 .. 1 swap(v[i], v[below(i+1)]).
template <typename T>
void seeded_shuffle(std::vector<T>& values, std::uint64_t seed) {
    SplitMix64 rng(seed);
    for (std::size_t i = values.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i));
        using std::swap;
        swap(values[i - 1], values[j]);
    }
}

}  // namespace iqarag
