#include "iqarag/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "iqarag/error.hpp"

namespace iqarag {

namespace {

void check_dims(std::size_t a, std::size_t b) {
    if (a != b) {
        throw ValidationError("dimension mismatch: " + std::to_string(a) + " vs " + std::to_string(b));
    }
}

double distance(Metric metric, std::span<const float> a, std::span<const float> b) {
    return metric == Metric::L2 ? l2_distance(a, b) : cosine_distance(a, b);
}

}  // namespace

std::string_view metric_name(Metric metric) { return metric == Metric::L2 ? "l2" : "cosine"; }

Metric parse_metric(std::string_view name) {
    if (name == "l2") return Metric::L2;
    if (name == "cosine") return Metric::Cosine;
    throw ValidationError("unknown metric '" + std::string(name) + "' (l2|cosine)");
}

double l2_distance(std::span<const float> a, std::span<const float> b) {
    check_dims(a.size(), b.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        sum += d * d;
    }
    return std::sqrt(sum);
}

double cosine_distance(std::span<const float> a, std::span<const float> b) {
    check_dims(a.size(), b.size());
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a[i], y = b[i];
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if (na == 0.0 || nb == 0.0) return 1.0;
    return std::max(0.0, 1.0 - dot / (std::sqrt(na) * std::sqrt(nb)));
}

RetrievalIndex::RetrievalIndex(FeatureMatrix features, std::vector<double> mos, Metric metric)
    : features_(std::move(features)), mos_(std::move(mos)), metric_(metric) {
    if (features_.rows() != mos_.size()) {
        throw ValidationError("index has " + std::to_string(features_.rows()) + " feature rows but " +
                              std::to_string(mos_.size()) + " MOS values");
    }
    for (double m : mos_) {
        if (!(m >= 0.0 && m <= 1.0)) throw ValidationError("index MOS values must lie in [0,1]");
    }
}

RetrievalIndex RetrievalIndex::build(const FeatureMatrix& features, const DatasetManifest& references,
                                     Metric metric) {
    std::vector<double> mos;
    mos.reserve(references.records.size());
    for (const auto& r : references.records) mos.push_back(r.mos_norm);
    return RetrievalIndex(align(features, references), std::move(mos), metric);
}

std::vector<Neighbor> knn(const RetrievalIndex& index, std::span<const float> query, std::size_t k,
                          unsigned workers) {
    if (k == 0) throw ValidationError("k must be at least 1");
    if (index.size() == 0) throw ValidationError("retrieval index is empty");
    check_dims(query.size(), index.dim());

    const std::size_t n = index.size();
    std::vector<double> dist(n);
    auto scan = [&](std::size_t begin, std::size_t end) {
        for (std::size_t r = begin; r < end; ++r) dist[r] = distance(index.metric(), query, index.features().row(r));
    };

    const std::size_t chunks = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(1, n / 256));
    if (chunks <= 1) {
        scan(0, n);
    } else {
        std::vector<std::jthread> pool;
        const std::size_t step = (n + chunks - 1) / chunks;
        for (std::size_t begin = 0; begin < n; begin += step) pool.emplace_back(scan, begin, std::min(n, begin + step));
    }

    const std::size_t take = std::min(k, n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto closer = [&](std::size_t a, std::size_t b) { return dist[a] < dist[b] || (dist[a] == dist[b] && a < b); };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), closer);

    std::vector<Neighbor> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        const std::size_t r = order[i];
        out.push_back(Neighbor{index.features().id(r), dist[r], index.mos()[r], i + 1, r});
    }
    return out;
}

int bin_of(double mos) {
    if (!(mos >= 0.0 && mos <= 1.0)) throw ValidationError("MOS " + std::to_string(mos) + " outside [0,1]");
    // Compare against the lower edges j/5 as doubles so that literals such as
    // 0.6 land in the bin they name.
    for (int j = static_cast<int>(kBinCount) - 1; j >= 1; --j) {
        if (mos >= static_cast<double>(j) / static_cast<double>(kBinCount)) return j + 1;
    }
    return 1;
}

std::vector<std::string> AnchorSet::ids() const {
    std::vector<std::string> out;
    out.reserve(entries.size());
    for (const auto& a : entries) out.push_back(a.id);
    return out;
}

AnchorSet select_anchors(std::span<const Neighbor> neighbors, std::string_view query_id, std::size_t max_anchors) {
    AnchorSet set;
    set.query_id = std::string(query_id);
    std::array<const Neighbor*, kBinCount> first{};
    for (const auto& nb : neighbors) {
        if (nb.id == query_id) continue;
        auto& slot = first[static_cast<std::size_t>(bin_of(nb.mos) - 1)];
        if (slot == nullptr) slot = &nb;
    }

    std::vector<Anchor> picked;
    for (std::size_t b = 0; b < kBinCount; ++b) {
        if (const Neighbor* nb = first[b]) {
            picked.push_back(Anchor{nb->id, nb->mos, static_cast<int>(b + 1), nb->rank, nb->distance});
        }
    }
    const std::size_t limit = std::min(max_anchors, kMaxAnchors);
    if (picked.size() > limit) {
        // Keep the nearest representatives, then restore bin order.
        std::stable_sort(picked.begin(), picked.end(), [](const Anchor& a, const Anchor& b) { return a.rank < b.rank; });
        picked.resize(limit);
        std::sort(picked.begin(), picked.end(), [](const Anchor& a, const Anchor& b) { return a.bin < b.bin; });
    }
    set.entries = std::move(picked);
    return set;
}

AnchorSet retrieve(const RetrievalIndex& index, std::span<const float> query, std::size_t k,
                   std::string_view query_id, std::size_t max_anchors, unsigned workers) {
    const auto neighbors = knn(index, query, k, workers);
    return select_anchors(neighbors, query_id, max_anchors);
}

}  // namespace iqarag
