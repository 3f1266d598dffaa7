#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "iqarag/corpus.hpp"
#include "iqarag/featstore.hpp"
#include "iqarag/retrieval.hpp"

namespace iqarag::testing {

// Unique scratch directory, removed on destruction.
class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

// Query q at the origin and six references at known distances:
// r1=(1,0) r2=(0,2) r3=(3,0) r4=(0,4) r5=(5,0) r6=(0,1.5)
// with MOS 0.10 0.30 0.50 0.70 0.90 0.15.
struct SixRefFixture {
    DatasetManifest references;  // r1..r6 on the unit scale
    FeatureMatrix features;      // q, r1..r6
};
SixRefFixture six_ref_fixture();

// n images on a [1,5] scale with i.i.d. normal features.
struct SyntheticDataset {
    DatasetManifest manifest;
    FeatureMatrix features;
};
SyntheticDataset synthetic_dataset(const std::string& name, std::size_t n, std::size_t dim, std::uint64_t seed);

// Writes manifest + features and returns their paths.
struct WrittenDataset {
    std::filesystem::path manifest;
    std::filesystem::path features;
};
WrittenDataset write_dataset(const SyntheticDataset& d, const std::filesystem::path& dir);

// Query "q" plus anchors a1..a5 with MOS 0.1, 0.3, 0.5, 0.7, 0.9 (bins 1..5).
ImageCatalog golden_catalog();
// The first `p` of a1..a5.
AnchorSet golden_anchors(std::size_t p);

// Random retrieval problem: N <= 200, D <= 16, k in 1..N, references named
// r<row>. Half the instances use small integer coordinates so distance ties
// are common; MOS values sit on a 0.05 grid that hits every bin edge.
struct RandomInstance {
    std::vector<std::vector<float>> refs;
    std::vector<double> mos;
    std::vector<float> query;
    std::size_t k = 1;

    RetrievalIndex index() const;
};
RandomInstance random_instance(std::mt19937_64& rng);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace iqarag::testing
