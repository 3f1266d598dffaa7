#include <doctest.h>

#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "iqarag/corpus.hpp"
#include "iqarag/error.hpp"
#include "iqarag/rng.hpp"

using namespace iqarag;

namespace {

DatasetManifest parse(const std::string& text) {
    std::istringstream in(text);
    return parse_manifest(in, "m.jsonl");
}

DatasetManifest numbered(std::size_t n) {
    std::vector<ImageRecord> records;
    for (std::size_t i = 0; i < n; ++i) {
        records.push_back({"img" + std::to_string(i), "p" + std::to_string(i), "d", static_cast<double>(i % 101), 0});
    }
    return make_manifest("d", 0, 100, std::move(records));
}

}  // namespace

TEST_CASE("manifest normalizes MOS against the declared scale") {
    auto m = parse(R"({"name":"live","scale_min":1,"scale_max":5}
{"id":"a","path":"a.jpg","dataset":"live","mos_raw":3}
{"id":"b","path":"b.jpg","dataset":"live","mos_raw":1}
{"id":"c","path":"c.jpg","dataset":"live","mos_raw":5}
)");
    CHECK(m.name == "live");
    REQUIRE(m.records.size() == 3);
    CHECK(m.records[0].mos_norm == 0.5);
    CHECK(m.records[1].mos_norm == 0.0);
    CHECK(m.records[2].mos_norm == 1.0);
}

TEST_CASE("manifest on a 0..100 scale") {
    auto m = parse("{\"name\":\"k\",\"scale_min\":0,\"scale_max\":100}\n"
                   "{\"id\":\"x\",\"path\":\"x\",\"dataset\":\"k\",\"mos_raw\":73}\n");
    CHECK(m.records[0].mos_norm == doctest::Approx(0.73).epsilon(1e-15));
}

TEST_CASE("manifest errors name the offending line") {
    const std::string header = "{\"name\":\"k\",\"scale_min\":1,\"scale_max\":5}\n";

    SUBCASE("malformed JSON") {
        CHECK_THROWS_WITH_AS(parse(header + "{\"id\":\"a\",\n"), doctest::Contains("m.jsonl:2"), ValidationError);
    }
    SUBCASE("mos outside scale") {
        CHECK_THROWS_WITH_AS(parse(header + R"({"id":"a","path":"a","dataset":"k","mos_raw":7})" "\n"),
                             doctest::Contains("outside declared scale"), ValidationError);
    }
    SUBCASE("duplicate id") {
        const std::string rec = R"({"id":"a","path":"a","dataset":"k","mos_raw":2})" "\n";
        CHECK_THROWS_WITH_AS(parse(header + rec + "\n" + rec), doctest::Contains("m.jsonl:4: duplicate id 'a'"),
                             ValidationError);
    }
    SUBCASE("missing field") {
        CHECK_THROWS_WITH_AS(parse(header + R"({"id":"a","dataset":"k","mos_raw":2})" "\n"),
                             doctest::Contains("missing field 'path'"), ValidationError);
    }
    SUBCASE("inverted scale") {
        CHECK_THROWS_AS(parse("{\"name\":\"k\",\"scale_min\":5,\"scale_max\":1}\n"), ValidationError);
    }
    SUBCASE("no records") { CHECK_THROWS_AS(parse(header), ValidationError); }
}

TEST_CASE("missing manifest file") {
    CHECK_THROWS_AS(load_manifest("/nonexistent/manifest.jsonl"), FileNotFoundError);
}

TEST_CASE("manifest write/load round trip") {
    testing::TempDir dir;
    auto m = numbered(20);
    save_manifest(m, dir / "m.jsonl");
    auto back = load_manifest(dir / "m.jsonl");
    REQUIRE(back.records.size() == m.records.size());
    for (std::size_t i = 0; i < m.records.size(); ++i) {
        CHECK(back.records[i].id == m.records[i].id);
        CHECK(back.records[i].mos_norm == m.records[i].mos_norm);
    }
}

TEST_CASE("normalization is monotone within a manifest") {
    auto m = numbered(101);
    for (std::size_t i = 1; i < m.records.size(); ++i) {
        CHECK(m.records[i - 1].mos_norm < m.records[i].mos_norm);
    }
}

TEST_CASE("split sizes follow the floor rule") {
    auto m = numbered(1000);
    CHECK(split(m, {1, 9, 1}).reference_ids.size() == 100);
    CHECK(split(m, {1, 4, 1}).reference_ids.size() == 200);
    CHECK(split(m, {3, 7, 1}).reference_ids.size() == 300);
    CHECK(reference_count(7, {1, 2, 0}) == 2);
    CHECK(reference_count(1, {1, 9, 0}) == 0);
}

TEST_CASE("split is a deterministic partition") {
    auto m = numbered(257);
    for (std::uint64_t seed : {0ULL, 1ULL, 42ULL, 0xDEADBEEFULL}) {
        const auto a = split(m, {3, 7, seed});
        const auto b = split(m, {3, 7, seed});
        CHECK(a.reference_ids == b.reference_ids);
        CHECK(a.test_ids == b.test_ids);

        std::set<std::string> ref(a.reference_ids.begin(), a.reference_ids.end());
        std::set<std::string> all(ref);
        for (const auto& id : a.test_ids) {
            CHECK(ref.count(id) == 0);
            all.insert(id);
        }
        CHECK(all.size() == m.records.size());
    }
}

TEST_CASE("changing the seed changes membership, never sizes") {
    auto m = numbered(500);
    const auto a = split(m, {1, 4, 7});
    const auto b = split(m, {1, 4, 8});
    CHECK(a.reference_ids.size() == b.reference_ids.size());
    CHECK(a.reference_ids != b.reference_ids);
}

TEST_CASE("SplitMix64 reference outputs") {
    // First outputs for seed 1234567 from the published reference code.
    SplitMix64 rng(1234567);
    CHECK(rng.next() == 6457827717110365317ULL);
    CHECK(rng.next() == 3203168211198807973ULL);
    CHECK(rng.next() == 9817491932198370423ULL);
}

TEST_CASE("mul_high64 matches 128-bit arithmetic") {
    CHECK(mul_high64(~0ULL, ~0ULL) == 0xFFFFFFFFFFFFFFFEULL);
    CHECK(mul_high64(1ULL << 63, 4) == 2);
    CHECK(mul_high64(0x123456789ABCDEF0ULL, 0x0FEDCBA987654321ULL) == 0x0121FA00AD77D742ULL);
}

TEST_CASE("ratio parsing") {
    auto s = SplitSpec::parse_ratio("3:7", 9);
    CHECK(s.ref_parts == 3);
    CHECK(s.test_parts == 7);
    CHECK(s.seed == 9);
    CHECK(s.ratio_string() == "3:7");
    CHECK_THROWS_AS(SplitSpec::parse_ratio("0:9"), ValidationError);
    CHECK_THROWS_AS(SplitSpec::parse_ratio("1-9"), ValidationError);
    CHECK_THROWS_AS(SplitSpec::parse_ratio("1:x"), ValidationError);
}

TEST_CASE("pooling") {
    auto one = make_manifest("a", 1, 5, {{"x", "x", "a", 5, 0}, {"y", "y", "a", 2, 0}, {"z", "z", "a", 1, 0}});
    auto two = make_manifest("b", 0, 100, {{"x", "x", "b", 50, 0}, {"p", "p", "b", 0, 0}, {"q", "q", "b", 10, 0},
                                          {"r", "r", "b", 100, 0}});

    SUBCASE("single manifest preserves count and values") {
        auto p = pool(std::span(&one, 1));
        REQUIRE(p.records.size() == 3);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(p.records[i].mos_raw == one.records[i].mos_norm);
            CHECK(p.records[i].mos_norm == one.records[i].mos_norm);
        }
        CHECK(p.records[0].mos_norm == 1.0);
    }
    SUBCASE("two manifests") {
        std::vector<DatasetManifest> both{one, two};
        auto p = pool(both);
        CHECK(p.records.size() == 7);
        CHECK(p.scale_min == 0.0);
        CHECK(p.scale_max == 1.0);
        CHECK(p.find("a/x") != nullptr);
        CHECK(p.find("b/x")->mos_norm == 0.5);
    }
    SUBCASE("collision after prefixing") {
        std::vector<DatasetManifest> same{one, one};
        CHECK_THROWS_AS(pool(same), ValidationError);
    }
}

TEST_CASE("select keeps manifest order and rejects unknown ids") {
    auto m = numbered(10);
    std::vector<std::string> ids{"img7", "img2"};
    auto s = select(m, ids);
    REQUIRE(s.records.size() == 2);
    CHECK(s.records[0].id == "img2");
    std::vector<std::string> bad{"nope"};
    CHECK_THROWS_AS(select(m, bad), ValidationError);
}

TEST_CASE("catalog lookups") {
    auto m = numbered(3);
    ImageCatalog cat(m);
    CHECK(cat.contains("img1"));
    CHECK_FALSE(cat.contains("img9"));
    CHECK_THROWS_WITH_AS(cat.at("img9"), doctest::Contains("img9"), ValidationError);
}
