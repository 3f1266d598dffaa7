#include "iqarag/prompt.hpp"

#include <algorithm>
#include <cstdio>

#include "iqarag/quality.hpp"

namespace iqarag {

using nlohmann::json;

namespace {

// Bin j (1..5) -> word; bins run from worst to best.
constexpr std::array<QualityWord, kBinCount> kBinWords = {QualityWord::Bad, QualityWord::Poor, QualityWord::Fair,
                                                         QualityWord::Good, QualityWord::Excellent};

std::vector<std::string> candidate_words() { return {kCandidateWords.begin(), kCandidateWords.end()}; }

PromptPart text(std::string s) { return PromptPart{PartKind::Text, std::move(s)}; }
PromptPart image(std::string_view id) { return PromptPart{PartKind::Image, std::string(id)}; }

std::string level_text(const Anchor& a, LevelFormat format) {
    if (format == LevelFormat::Word) return std::string(level_word(a.mos));
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", a.mos);
    return buf;
}

void append_query(PromptScript& script, std::string_view image_id) {
    script.parts.push_back(image(image_id));
    script.parts.push_back(text(std::string(kQuestionText)));
    script.assistant_prefix = std::string(kAssistantPrefix);
    script.candidate_words = candidate_words();
}

}  // namespace

std::size_t PromptScript::image_count() const {
    return static_cast<std::size_t>(
        std::count_if(parts.begin(), parts.end(), [](const PromptPart& p) { return p.kind == PartKind::Image; }));
}

const std::string& PromptScript::query_image() const {
    auto it = std::find_if(parts.rbegin(), parts.rend(), [](const PromptPart& p) { return p.kind == PartKind::Image; });
    if (it == parts.rend()) throw ValidationError("prompt script has no image part");
    return it->payload;
}

std::string_view level_word(double mos) {
    return word_name(kBinWords[static_cast<std::size_t>(bin_of(mos) - 1)]);
}

PromptScript build_baseline_prompt(std::string_view image_id, const ImageCatalog& catalog) {
    catalog.at(image_id);
    PromptScript script;
    append_query(script, image_id);
    return script;
}

PromptScript build_rag_prompt(const AnchorSet& anchors, std::string_view image_id, const ImageCatalog& catalog,
                              const PromptOptions& options) {
    if (anchors.empty()) throw EmptyAnchorSetError();
    catalog.at(image_id);
    for (const auto& a : anchors.entries) catalog.at(a.id);

    std::vector<const Anchor*> ordered;
    for (const auto& a : anchors.entries) ordered.push_back(&a);
    switch (options.order) {
        case AnchorOrder::Ascending:
            std::stable_sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->bin < b->bin; });
            break;
        case AnchorOrder::Descending:
            std::stable_sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->bin > b->bin; });
            break;
        case AnchorOrder::Rank:
            std::stable_sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->rank < b->rank; });
            break;
    }

    PromptScript script;
    script.parts.push_back(text("Give you " + std::to_string(anchors.size()) + " images."));
    for (const Anchor* a : ordered) {
        script.parts.push_back(image(a->id));
        script.parts.push_back(text("This image's quality is " + level_text(*a, options.level) + "."));
    }
    append_query(script, image_id);
    return script;
}

json to_json(const PromptScript& script) {
    json parts = json::array();
    for (const auto& p : script.parts) {
        if (p.kind == PartKind::Text) {
            parts.push_back({{"type", "text"}, {"text", p.payload}});
        } else {
            parts.push_back({{"type", "image"}, {"image_id", p.payload}});
        }
    }
    json doc = json::object();
    doc["parts"] = std::move(parts);
    doc["assistant_prefix"] = script.assistant_prefix;
    doc["candidate_words"] = script.candidate_words;
    return doc;
}

PromptScript prompt_from_json(const json& doc) {
    if (!doc.is_object() || !doc.contains("parts") || !doc["parts"].is_array()) {
        throw ValidationError("prompt document must be an object with a 'parts' array");
    }
    PromptScript script;
    for (const auto& p : doc["parts"]) {
        const auto type = p.value("type", std::string{});
        if (type == "text" && p.contains("text") && p["text"].is_string()) {
            script.parts.push_back(text(p["text"].get<std::string>()));
        } else if (type == "image" && p.contains("image_id") && p["image_id"].is_string()) {
            script.parts.push_back(image(p["image_id"].get<std::string>()));
        } else {
            throw ValidationError("malformed prompt part: " + p.dump());
        }
    }
    script.assistant_prefix = doc.value("assistant_prefix", std::string{});
    script.candidate_words = doc.value("candidate_words", std::vector<std::string>{});
    return script;
}

std::string serialize(const PromptScript& script) { return to_json(script).dump(2) + "\n"; }

std::string_view anchor_order_name(AnchorOrder order) {
    switch (order) {
        case AnchorOrder::Ascending: return "ascending";
        case AnchorOrder::Descending: return "descending";
        case AnchorOrder::Rank: return "rank";
    }
    return "ascending";
}

AnchorOrder parse_anchor_order(std::string_view name) {
    if (name == "ascending") return AnchorOrder::Ascending;
    if (name == "descending") return AnchorOrder::Descending;
    if (name == "rank") return AnchorOrder::Rank;
    throw ValidationError("unknown anchor order '" + std::string(name) + "' (ascending|descending|rank)");
}

LevelFormat parse_level_format(std::string_view name) {
    if (name == "word") return LevelFormat::Word;
    if (name == "numeric") return LevelFormat::Numeric;
    throw ValidationError("unknown level format '" + std::string(name) + "' (word|numeric)");
}

}  // namespace iqarag
