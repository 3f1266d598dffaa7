#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace iqarag {

struct ImageRecord {
    std::string id;
    std::string path;
    std::string dataset;
    double mos_raw = 0.0;
    double mos_norm = 0.0;
};

struct DatasetManifest {
    std::string name;
    double scale_min = 0.0;
    double scale_max = 1.0;
    std::vector<ImageRecord> records;

    const ImageRecord* find(std::string_view id) const;
};

// Linear min-max map onto [0,1] using the declared scale bounds.
double normalize_mos(double mos_raw, double scale_min, double scale_max);

// JSON-lines manifest: a header object {name, scale_min, scale_max}, then one
// object {id, path, dataset, mos_raw} per line. Blank lines are skipped.
// Errors carry `source:line`.
DatasetManifest parse_manifest(std::istream& in, const std::string& source = "<stream>");
DatasetManifest load_manifest(const std::filesystem::path& path);

void write_manifest(const DatasetManifest& manifest, std::ostream& out);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// Builds a manifest from records whose mos_raw is already set, filling mos_norm
// and checking every invariant (non-empty, unique ids, in-scale values).
DatasetManifest make_manifest(std::string name, double scale_min, double scale_max,
                              std::vector<ImageRecord> records);

struct SplitSpec {
    std::uint32_t ref_parts = 1;
    std::uint32_t test_parts = 9;
    std::uint64_t seed = 0;

    // "A:B" with positive integers.
    static SplitSpec parse_ratio(std::string_view ratio, std::uint64_t seed = 0);
    std::string ratio_string() const;
};

// Both id lists follow manifest order.
struct SplitResult {
    std::vector<std::string> reference_ids;
    std::vector<std::string> test_ids;
};

std::size_t reference_count(std::size_t total, const SplitSpec& spec);

// Seeded Fisher-Yates (SplitMix64) over record positions; the first
// floor(N * ref / (ref + test)) shuffled positions form the reference side.
SplitResult split(const DatasetManifest& manifest, const SplitSpec& spec);

// Records of `manifest` whose ids are listed, in manifest order.
DatasetManifest select(const DatasetManifest& manifest, std::span<const std::string> ids);

// Combined unit-scale manifest. Ids become "<dataset name>/<id>" and each
// record's mos_raw is its source mos_norm.
DatasetManifest pool(std::span<const DatasetManifest> manifests, std::string name = "COM");

// Id -> record lookup across one or more manifests.
class ImageCatalog {
public:
    ImageCatalog() = default;
    explicit ImageCatalog(const DatasetManifest& manifest) { add(manifest); }

    // Throws ValidationError when an id is already present with a different path.
    void add(const DatasetManifest& manifest);

    const ImageRecord* find(std::string_view id) const;
    const ImageRecord& at(std::string_view id) const;
    bool contains(std::string_view id) const { return find(id) != nullptr; }
    std::size_t size() const noexcept { return records_.size(); }
    const std::unordered_map<std::string, ImageRecord>& entries() const noexcept { return records_; }

private:
    std::unordered_map<std::string, ImageRecord> records_;
};

}  // namespace iqarag
