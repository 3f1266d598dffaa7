#include "iqarag/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "iqarag/error.hpp"

namespace iqarag {

using nlohmann::json;

namespace {

constexpr WordTable kDefaultWeights{1.0, 0.75, 0.5, 0.25, 0.0};

json word_object(const WordTable& values) {
    json obj = json::object();
    for (std::size_t i = 0; i < kWordCount; ++i) obj[std::string(kCandidateWords[i])] = values[i];
    return obj;
}

// Compensated dot product (Ogita, Rump & Oishi "Dot2"): as accurate as if
// computed in twice the working precision, then rounded once.
double dot2(const WordTable& a, const WordTable& b) {
    double sum = 0.0, comp = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double prod = a[i] * b[i];
        const double prod_err = std::fma(a[i], b[i], -prod);
        const double t = sum + prod;
        const double z = t - sum;
        comp += ((sum - (t - z)) + (prod - z)) + prod_err;
        sum = t;
    }
    return sum + comp;
}

}  // namespace

QualityWeights::QualityWeights() : values_(kDefaultWeights) {}

QualityWeights::QualityWeights(const WordTable& values) : values_(values) {
    for (double v : values_) {
        if (!std::isfinite(v) || v < 0.0 || v > 1.0) throw ValidationError("fusion weights must lie in [0,1]");
    }
    for (std::size_t i = 1; i < kWordCount; ++i) {
        if (!(values_[i] < values_[i - 1])) {
            throw ValidationError("fusion weights must strictly decrease from excellent to bad");
        }
    }
    if (values_.front() != 1.0 || values_.back() != 0.0) {
        throw ValidationError("fusion weights must run from 1 (excellent) to 0 (bad)");
    }
}

QualityWeights QualityWeights::parse(std::string_view text) {
    WordTable values{};
    std::size_t count = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const auto token = std::string(text.substr(start, comma == std::string_view::npos ? text.npos : comma - start));
        if (count == kWordCount) throw ValidationError("expected exactly 5 weights, got more");
        try {
            std::size_t used = 0;
            values[count] = std::stod(token, &used);
            if (used != token.size()) throw std::invalid_argument(token);
        } catch (const std::logic_error&) {
            throw ValidationError("invalid weight '" + token + "'");
        }
        ++count;
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    if (count != kWordCount) {
        throw ValidationError("expected exactly 5 weights (excellent,good,fair,poor,bad), got " + std::to_string(count));
    }
    return QualityWeights(values);
}

bool QualityWeights::is_default() const { return values_ == kDefaultWeights; }

std::string QualityWeights::to_string() const {
    std::ostringstream out;
    for (std::size_t i = 0; i < kWordCount; ++i) out << (i ? "," : "") << values_[i];
    return out.str();
}

WordTable softmax_closed_set(const WordTable& logits) {
    for (double z : logits) {
        if (!std::isfinite(z)) throw ValidationError("non-finite logit");
    }
    const double zmax = *std::max_element(logits.begin(), logits.end());
    WordTable p{};
    double sum = 0.0;
    for (std::size_t i = 0; i < kWordCount; ++i) {
        p[i] = std::exp(logits[i] - zmax);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

QualityScore fuse_score(const WordTable& probabilities, const QualityWeights& weights) {
    QualityScore s;
    s.probabilities = probabilities;
    s.value = std::clamp(dot2(probabilities, weights.values()), 0.0, 1.0);
    return s;
}

std::string_view mode_name(Mode mode) { return mode == Mode::Rag ? "rag" : "baseline"; }

Mode parse_mode(std::string_view name) {
    if (name == "baseline") return Mode::Baseline;
    if (name == "rag") return Mode::Rag;
    throw ValidationError("unknown mode '" + std::string(name) + "' (baseline|rag)");
}

json to_json(const Prediction& p) {
    json doc = json::object();
    doc["id"] = p.id;
    doc["mode"] = mode_name(p.mode);
    doc["score"] = p.score.value;
    doc["probabilities"] = word_object(p.score.probabilities);
    doc["anchors"] = p.anchors;
    doc["fallback"] = p.fallback;
    return doc;
}

PromptScript prepare_prompt(const PredictionContext& ctx, std::string_view image_id, Mode mode,
                            AnchorSet* anchors_out) {
    if (ctx.catalog == nullptr) throw ValidationError("prediction context has no image catalog");
    if (mode == Mode::Baseline) return build_baseline_prompt(image_id, *ctx.catalog);

    if (ctx.index == nullptr || ctx.query_features == nullptr) {
        throw ValidationError("rag mode needs a retrieval index and query features");
    }
    ctx.catalog->at(image_id);
    auto anchors = retrieve(*ctx.index, ctx.query_features->row_of(image_id), ctx.k, image_id, ctx.max_anchors,
                            ctx.search_workers);
    if (anchors_out != nullptr) *anchors_out = anchors;
    if (anchors.empty()) return build_baseline_prompt(image_id, *ctx.catalog);
    return build_rag_prompt(anchors, image_id, *ctx.catalog, ctx.prompt);
}

Prediction predict(const PredictionContext& ctx, std::string_view image_id, Mode mode) {
    if (ctx.backend == nullptr) throw ValidationError("prediction context has no backend");
    AnchorSet anchors;
    const auto script = prepare_prompt(ctx, image_id, mode, &anchors);

    Prediction p;
    p.id = std::string(image_id);
    p.mode = mode;
    p.anchors = anchors.ids();
    p.fallback = mode == Mode::Rag && anchors.empty();
    const auto response = ctx.backend->query_logits(script, ctx.images);
    p.score = fuse_score(softmax_closed_set(response), ctx.weights);
    return p;
}

}  // namespace iqarag
