#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "iqarag/corpus.hpp"
#include "iqarag/featstore.hpp"

namespace iqarag {

inline constexpr std::size_t kBinCount = 5;
inline constexpr std::size_t kMaxAnchors = kBinCount;
inline constexpr std::size_t kDefaultK = 50;

enum class Metric {
    L2,      // ||a - b||_2
    Cosine,  // 1 - cos(a, b); ascending distance == descending similarity
};

std::string_view metric_name(Metric metric);
Metric parse_metric(std::string_view name);

// Euclidean distance, accumulated in double. Throws on dimension mismatch.
double l2_distance(std::span<const float> a, std::span<const float> b);
double cosine_distance(std::span<const float> a, std::span<const float> b);

// Reference features paired with their unit-scale MOS.
class RetrievalIndex {
public:
    RetrievalIndex(FeatureMatrix features, std::vector<double> mos, Metric metric = Metric::L2);

    // Aligns `features` to `references` and takes mos_norm from the manifest.
    static RetrievalIndex build(const FeatureMatrix& features, const DatasetManifest& references,
                                Metric metric = Metric::L2);

    const FeatureMatrix& features() const noexcept { return features_; }
    std::span<const double> mos() const noexcept { return mos_; }
    Metric metric() const noexcept { return metric_; }
    std::size_t size() const noexcept { return features_.rows(); }
    std::size_t dim() const noexcept { return features_.dim(); }

private:
    FeatureMatrix features_;
    std::vector<double> mos_;
    Metric metric_;
};

struct Neighbor {
    std::string id;
    double distance = 0.0;
    double mos = 0.0;
    std::size_t rank = 0;  // 1-based
    std::size_t row = 0;   // row in the index
};

// Exact flat scan. Returns min(k, N) neighbors by ascending distance, ties by
// ascending row. `workers` > 1 splits the distance pass across threads; the
// result is identical to the sequential one.
std::vector<Neighbor> knn(const RetrievalIndex& index, std::span<const float> query, std::size_t k,
                          unsigned workers = 1);

// 1..5; bins are [(j-1)/5, j/5) except the last, which is closed at 1.0.
int bin_of(double mos);

struct Anchor {
    std::string id;
    double mos = 0.0;
    int bin = 0;
    std::size_t rank = 0;
    double distance = 0.0;
};

// At most one anchor per bin, ordered by ascending bin.
struct AnchorSet {
    std::string query_id;
    std::vector<Anchor> entries;

    std::size_t size() const noexcept { return entries.size(); }
    bool empty() const noexcept { return entries.empty(); }
    std::vector<std::string> ids() const;
};

// Keeps the nearest neighbor of each bin, skipping the query's own id. With max_anchors < 5 only the
// max_anchors nearest of those survive (still listed in bin order).
AnchorSet select_anchors(std::span<const Neighbor> neighbors, std::string_view query_id,
                         std::size_t max_anchors = kMaxAnchors);

AnchorSet retrieve(const RetrievalIndex& index, std::span<const float> query, std::size_t k,
                   std::string_view query_id, std::size_t max_anchors = kMaxAnchors,
                   unsigned workers = 1);

}  // namespace iqarag
