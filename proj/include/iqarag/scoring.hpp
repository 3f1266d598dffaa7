#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "iqarag/corpus.hpp"
#include "iqarag/featstore.hpp"
#include "iqarag/gateway.hpp"
#include "iqarag/prompt.hpp"
#include "iqarag/quality.hpp"
#include "iqarag/retrieval.hpp"

namespace iqarag {

// Fusion weight per word, excellent..bad. Must be strictly decreasing with
// max 1 and min 0.
class QualityWeights {
public:
    QualityWeights();  // 1, 0.75, 0.5, 0.25, 0
    explicit QualityWeights(const WordTable& values);

    // "w1,w2,w3,w4,w5" in excellent..bad order.
    static QualityWeights parse(std::string_view text);

    const WordTable& values() const noexcept { return values_; }
    double operator[](QualityWord w) const noexcept { return values_[index_of(w)]; }
    bool is_default() const;
    std::string to_string() const;

private:
    WordTable values_;
};

struct QualityScore {
    double value = 0.0;
    WordTable probabilities{};
};

// exp(z - max z) / sum. Throws ValidationError on a non-finite logit.
WordTable softmax_closed_set(const WordTable& logits);
inline WordTable softmax_closed_set(const LogitResponse& r) { return softmax_closed_set(r.logits); }

QualityScore fuse_score(const WordTable& probabilities, const QualityWeights& weights = {});

enum class Mode { Baseline, Rag };

std::string_view mode_name(Mode mode);
Mode parse_mode(std::string_view name);

struct Prediction {
    std::string id;
    Mode mode = Mode::Baseline;
    QualityScore score;
    std::vector<std::string> anchors;
    bool fallback = false;  // rag requested, no anchors found, baseline used
};

// {"id","mode","score","probabilities","anchors","fallback"}
nlohmann::json to_json(const Prediction& p);

// Everything predict() needs. Pointers are non-owning; `index` may be null
// for baseline-only use.
struct PredictionContext {
    const RetrievalIndex* index = nullptr;
    const FeatureMatrix* query_features = nullptr;
    const ImageCatalog* catalog = nullptr;
    LogitBackend* backend = nullptr;
    ImageBytesResolver images;
    QualityWeights weights;
    std::size_t k = kDefaultK;
    std::size_t max_anchors = kMaxAnchors;
    PromptOptions prompt;
    unsigned search_workers = 1;
};

// Builds the prompt for `mode`, queries the backend and fuses the logits.
PromptScript prepare_prompt(const PredictionContext& ctx, std::string_view image_id, Mode mode,
                            AnchorSet* anchors_out = nullptr);
Prediction predict(const PredictionContext& ctx, std::string_view image_id, Mode mode);

}  // namespace iqarag
