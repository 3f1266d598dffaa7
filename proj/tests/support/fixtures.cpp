#include "fixtures.hpp"

#include <atomic>
#include <fstream>
#include <iterator>
#include <sstream>

#include <unistd.h>

namespace iqarag::testing {

TempDir::TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("iqarag-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

SixRefFixture six_ref_fixture() {
    const std::vector<std::string> ids{"r1", "r2", "r3", "r4", "r5", "r6"};
    const std::vector<double> mos{0.10, 0.30, 0.50, 0.70, 0.90, 0.15};
    std::vector<ImageRecord> records;
    for (std::size_t i = 0; i < ids.size(); ++i) records.push_back({ids[i], ids[i] + ".png", "six", mos[i], 0.0});
    auto manifest = make_manifest("six", 0.0, 1.0, std::move(records));

    std::vector<std::string> fids{"q", "r1", "r2", "r3", "r4", "r5", "r6"};
    std::vector<float> data{0, 0, 1, 0, 0, 2, 3, 0, 0, 4, 5, 0, 0, 1.5f};
    return SixRefFixture{std::move(manifest), FeatureMatrix(std::move(fids), 2, std::move(data), "fixture")};
}

SyntheticDataset synthetic_dataset(const std::string& name, std::size_t n, std::size_t dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> mos(1.0, 5.0);
    std::normal_distribution<float> feat(0.0f, 1.0f);

    std::vector<ImageRecord> records;
    std::vector<std::string> ids;
    std::vector<float> data;
    for (std::size_t i = 0; i < n; ++i) {
        std::ostringstream id;
        id << name << "_" << i;
        records.push_back({id.str(), "img/" + id.str() + ".jpg", name, mos(rng), 0.0});
        ids.push_back(id.str());
        for (std::size_t d = 0; d < dim; ++d) data.push_back(feat(rng));
    }
    return SyntheticDataset{make_manifest(name, 1.0, 5.0, std::move(records)),
                            FeatureMatrix(std::move(ids), dim, std::move(data), "synthetic")};
}

WrittenDataset write_dataset(const SyntheticDataset& d, const std::filesystem::path& dir) {
    WrittenDataset out{dir / (d.manifest.name + ".jsonl"), dir / (d.manifest.name + ".iqft")};
    save_manifest(d.manifest, out.manifest);
    write_features(d.features, out.features);
    return out;
}

ImageCatalog golden_catalog() {
    std::vector<ImageRecord> records{{"q", "q.png", "g", 0.42, 0}};
    for (int i = 1; i <= 5; ++i) {
        const auto id = "a" + std::to_string(i);
        records.push_back({id, id + ".png", "g", 0.1 + 0.2 * (i - 1), 0});
    }
    return ImageCatalog(make_manifest("g", 0, 1, std::move(records)));
}

AnchorSet golden_anchors(std::size_t p) {
    AnchorSet set;
    set.query_id = "q";
    for (std::size_t i = 0; i < p; ++i) {
        const double mos = 0.1 + 0.2 * static_cast<double>(i);
        // Ranks run opposite to bins so that presentation order is observable.
        set.entries.push_back({"a" + std::to_string(i + 1), mos, static_cast<int>(i + 1), p - i, 1.0 + i});
    }
    return set;
}

RetrievalIndex RandomInstance::index() const {
    std::vector<std::string> ids;
    std::vector<float> data;
    for (std::size_t i = 0; i < refs.size(); ++i) {
        ids.push_back("r" + std::to_string(i));
        data.insert(data.end(), refs[i].begin(), refs[i].end());
    }
    return RetrievalIndex(FeatureMatrix(ids, query.size(), data), mos);
}

RandomInstance random_instance(std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> n_dist(1, 200), d_dist(1, 16);
    const std::size_t n = n_dist(rng), d = d_dist(rng);
    const bool lattice = rng() % 2 == 0;
    std::uniform_int_distribution<int> cell(-2, 2);
    std::normal_distribution<float> gauss(0.0f, 1.0f);
    std::uniform_int_distribution<int> mos_step(0, 20);
    auto coord = [&] { return lattice ? static_cast<float>(cell(rng)) : gauss(rng); };

    RandomInstance inst;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<float> v(d);
        for (auto& x : v) x = coord();
        inst.refs.push_back(std::move(v));
        inst.mos.push_back(mos_step(rng) / 20.0);
    }
    inst.query.resize(d);
    for (auto& x : inst.query) x = coord();
    inst.k = std::uniform_int_distribution<std::size_t>(1, n)(rng);
    return inst;
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
}

}  // namespace iqarag::testing
