#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>

namespace iqarag {

// The closed candidate set scored at the answer position, in canonical order.
enum class QualityWord : std::size_t { Excellent = 0, Good, Fair, Poor, Bad };

inline constexpr std::size_t kWordCount = 5;

inline constexpr std::array<std::string_view, kWordCount> kCandidateWords = {
    "excellent", "good", "fair", "poor", "bad"};

// One value per candidate word, indexed by QualityWord.
using WordTable = std::array<double, kWordCount>;

constexpr std::size_t index_of(QualityWord w) noexcept { return static_cast<std::size_t>(w); }

constexpr std::string_view word_name(QualityWord w) noexcept { return kCandidateWords[index_of(w)]; }

constexpr std::optional<QualityWord> parse_word(std::string_view name) noexcept {
    for (std::size_t i = 0; i < kWordCount; ++i) {
        if (kCandidateWords[i] == name) return static_cast<QualityWord>(i);
    }
    return std::nullopt;
}

}  // namespace iqarag
