#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "iqarag/corpus.hpp"
#include "iqarag/error.hpp"
#include "iqarag/retrieval.hpp"

namespace iqarag {

inline constexpr std::string_view kQuestionText = "How would you rate the quality of this image?";
inline constexpr std::string_view kAssistantPrefix = "The quality of this image is ";

enum class PartKind { Text, Image };

struct PromptPart {
    PartKind kind = PartKind::Text;
    std::string payload;  // text, or an image id

    friend bool operator==(const PromptPart&, const PromptPart&) = default;
};

struct PromptScript {
    std::vector<PromptPart> parts;
    std::string assistant_prefix;
    std::vector<std::string> candidate_words;

    std::size_t image_count() const;
    // The assessed image: the last image part.
    const std::string& query_image() const;
    bool is_rag() const { return image_count() > 1; }

    friend bool operator==(const PromptScript&, const PromptScript&) = default;
};

enum class AnchorOrder { Ascending, Descending, Rank };
enum class LevelFormat { Word, Numeric };

struct PromptOptions {
    AnchorOrder order = AnchorOrder::Ascending;
    LevelFormat level = LevelFormat::Word;
};

// build_rag_prompt was handed no anchors; the caller should use the baseline.
class EmptyAnchorSetError : public ValidationError {
public:
    EmptyAnchorSetError() : ValidationError("anchor set is empty; fall back to the baseline prompt") {}
};

// bin 1..5 -> bad, poor, fair, good, excellent.
std::string_view level_word(double mos);

PromptScript build_baseline_prompt(std::string_view image_id, const ImageCatalog& catalog);
PromptScript build_rag_prompt(const AnchorSet& anchors, std::string_view image_id,
                              const ImageCatalog& catalog, const PromptOptions& options = {});

nlohmann::json to_json(const PromptScript& script);
PromptScript prompt_from_json(const nlohmann::json& doc);
// Two-space indented JSON with a trailing newline; the golden-file form.
std::string serialize(const PromptScript& script);

AnchorOrder parse_anchor_order(std::string_view name);
std::string_view anchor_order_name(AnchorOrder order);
LevelFormat parse_level_format(std::string_view name);

}  // namespace iqarag
