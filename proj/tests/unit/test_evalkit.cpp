#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "iqarag/evalkit.hpp"
#include "oracles.hpp"

using namespace iqarag;
using nlohmann::json;

namespace {

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> d(0.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

ExperimentConfig mock_config(const std::vector<testing::WrittenDataset>& files) {
    ExperimentConfig c;
    for (const auto& f : files) c.datasets.push_back({f.manifest, f.features});
    c.split = SplitSpec{1, 9, 7};
    return c;
}

}  // namespace

TEST_CASE("srcc examples") {
    CHECK(*srcc(std::vector<double>{1, 2, 3}, std::vector<double>{10, 20, 30}) == doctest::Approx(1.0));
    CHECK(*srcc(std::vector<double>{1, 2, 3}, std::vector<double>{30, 20, 10}) == doctest::Approx(-1.0));
    const double tie = *srcc(std::vector<double>{1, 2, 2, 3}, std::vector<double>{1, 2, 3, 4});
    CHECK(std::abs(tie - 4.5 / std::sqrt(22.5)) < 1e-12);
    CHECK(std::abs(tie - 0.94868) < 1e-4);
}

TEST_CASE("plcc examples") {
    CHECK(*plcc(std::vector<double>{0, 1}, std::vector<double>{0, 2}) == doctest::Approx(1.0));
    std::vector<double> x{0.3, 0.1, 0.9, 0.4};
    CHECK(*plcc(x, x) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("fractional ranks share the mean position") {
    CHECK(fractional_ranks(std::vector<double>{10, 30, 20, 30}) == std::vector<double>{1, 3.5, 2, 3.5});
    CHECK(fractional_ranks(std::vector<double>{5, 5, 5}) == std::vector<double>{2, 2, 2});
}

TEST_CASE("correlations match two-pass oracles") {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> small(0, 4);
    for (int t = 0; t < 200; ++t) {
        auto a = random_vector(rng, 50);
        auto b = random_vector(rng, 50);
        if (t % 2 == 1) {
            // Heavy ties.
            for (auto& v : a) v = small(rng);
        }
        CHECK(std::abs(*plcc(a, b) - *oracle::two_pass_pearson(a, b)) < 1e-9);
        CHECK(std::abs(*srcc(a, b) - *oracle::two_pass_spearman(a, b)) < 1e-9);
    }
}

TEST_CASE("correlation invariances and symmetry") {
    std::mt19937_64 rng(8);
    for (int t = 0; t < 100; ++t) {
        auto a = random_vector(rng, 40);
        auto b = random_vector(rng, 40);
        std::vector<double> mono(a.size()), affine(a.size());
        std::transform(a.begin(), a.end(), mono.begin(), [](double v) { return std::exp(3 * v) + v; });
        std::transform(a.begin(), a.end(), affine.begin(), [](double v) { return 2.5 * v - 7; });
        CHECK(std::abs(*srcc(mono, b) - *srcc(a, b)) < 1e-12);
        CHECK(std::abs(*plcc(affine, b) - *plcc(a, b)) < 1e-12);
        CHECK(std::abs(*srcc(a, b) - *srcc(b, a)) < 1e-15);
        CHECK(std::abs(*plcc(a, b) - *plcc(b, a)) < 1e-15);
        CHECK(std::abs(*plcc(a, b)) <= 1.0);
    }
}

TEST_CASE("degenerate correlation input") {
    std::vector<double> flat{0.5, 0.5, 0.5}, v{1, 2, 3};
    CHECK_FALSE(plcc(flat, v).has_value());
    CHECK_FALSE(srcc(v, flat).has_value());
    CHECK_FALSE(plcc_logistic(flat, v).has_value());
    CHECK_THROWS_AS(plcc(v, std::vector<double>{1, 2}), ValidationError);
    CHECK_THROWS_AS(srcc(std::vector<double>{1}, std::vector<double>{1}), ValidationError);
}

TEST_CASE("logistic PLCC absorbs a sigmoidal distortion") {
    std::vector<double> gt, pred;
    for (int i = 0; i < 60; ++i) {
        const double x = -3.0 + 6.0 * i / 59.0;
        pred.push_back(x);
        gt.push_back(1.0 + 4.0 / (1.0 + std::exp(-2.0 * x)));
    }
    const double raw = *plcc(pred, gt);
    const double fitted = *plcc_logistic(pred, gt);
    CHECK(fitted > raw);
    CHECK(fitted > 0.999);
}

TEST_CASE("evaluate pools prediction sets") {
    PredictionSet a{"A", {}, {}, {}}, b{"B", {}, {}, {}};
    for (int i = 0; i < 10; ++i) {
        a.add("a" + std::to_string(i), i * 0.1, i * 0.1 + 0.01 * (i % 3));
        b.add("b" + std::to_string(i), 1 - i * 0.1, 1 - i * 0.05);
    }
    const auto single = evaluate(a);
    const std::vector<PredictionSet> one{a};
    const auto com1 = evaluate(one);
    CHECK(single.srcc == com1.srcc);
    CHECK(single.plcc == com1.plcc);
    CHECK(single.count == 10);

    const std::vector<PredictionSet> both{a, b};
    const auto com = evaluate(both);
    CHECK(com.count == 20);
    std::vector<double> p = a.predicted, g = a.ground_truth;
    p.insert(p.end(), b.predicted.begin(), b.predicted.end());
    g.insert(g.end(), b.ground_truth.begin(), b.ground_truth.end());
    CHECK(std::abs(*com.srcc - *oracle::two_pass_spearman(p, g)) < 1e-12);

    PredictionSet tiny{"T", {}, {}, {}};
    tiny.add("x", 0.5, 0.5);
    CHECK_FALSE(evaluate(tiny).srcc.has_value());
}

TEST_CASE("mock experiment on one synthetic dataset") {
    testing::TempDir dir;
    auto files = testing::write_dataset(testing::synthetic_dataset("SYN", 200, 8, 3), dir.path());
    auto config = mock_config({files});
    config.predictions_path = dir / "pred.jsonl";
    const auto report = run_experiment(config);

    const auto* rag = report.find("SYN", Mode::Rag);
    const auto* base = report.find("SYN", Mode::Baseline);
    REQUIRE(rag != nullptr);
    REQUIRE(base != nullptr);
    CHECK(rag->count == 180);
    CHECK(rag->failures == 0);
    CHECK(rag->fallbacks == 0);
    CHECK(*rag->srcc >= 0.99);
    CHECK(*rag->plcc >= 0.99);
    CHECK(*rag->srcc > *base->srcc);

    // A single dataset: AVG and COM equal it.
    CHECK(report.avg_for(Mode::Rag)->srcc == rag->srcc);
    CHECK(report.com_for(Mode::Rag)->srcc == rag->srcc);
    CHECK(report.com_for(Mode::Baseline)->plcc == base->plcc);

    const auto lines = testing::read_text(dir / "pred.jsonl");
    CHECK(std::count(lines.begin(), lines.end(), '\n') == 360);

    const auto deltas = compare(report);
    REQUIRE(deltas.size() == 3);
    CHECK(deltas[0].name == "SYN");
    CHECK(deltas[1].name == "AVG");
    CHECK(deltas[2].name == "COM");
    CHECK(*deltas[0].srcc == doctest::Approx(*rag->srcc - *base->srcc));
    CHECK(*deltas[0].srcc > 0);
    CHECK(deltas_to_json(deltas).size() == 3);
    CHECK(format_deltas(deltas).find("SYN") != std::string::npos);
}

TEST_CASE("mock experiments are bit-reproducible") {
    testing::TempDir dir;
    auto a = testing::write_dataset(testing::synthetic_dataset("A", 120, 4, 1), dir.path());
    auto b = testing::write_dataset(testing::synthetic_dataset("B", 90, 4, 2), dir.path());
    auto config = mock_config({a, b});
    config.backend.max_concurrency = 8;
    const auto first = report_to_json(run_experiment(config)).dump(2);
    config.backend.max_concurrency = 1;
    const auto second = report_to_json(run_experiment(config)).dump(2);
    CHECK(first == second);
}

TEST_CASE("two identical datasets pool to the same metrics") {
    testing::TempDir dir;
    auto syn = testing::synthetic_dataset("A", 150, 4, 11);
    auto twin = syn;
    twin.manifest.name = "A2";
    auto fa = testing::write_dataset(syn, dir.path());
    auto fb = testing::write_dataset(twin, dir.path());
    const auto report = run_experiment(mock_config({fa, fb}));
    for (Mode m : {Mode::Baseline, Mode::Rag}) {
        const auto* one = report.find("A", m);
        const auto* com = report.com_for(m);
        CHECK(*report.find("A2", m)->srcc == *one->srcc);
        CHECK(std::abs(*com->srcc - *one->srcc) < 1e-12);
        CHECK(std::abs(*com->plcc - *one->plcc) < 1e-12);
        CHECK(std::abs(*report.avg_for(m)->plcc - *one->plcc) < 1e-15);
        CHECK(com->count == 2 * one->count);
    }
}

TEST_CASE("cross-dataset reference scores every image") {
    testing::TempDir dir;
    auto target = testing::write_dataset(testing::synthetic_dataset("T", 60, 4, 21), dir.path());
    auto refs = testing::write_dataset(testing::synthetic_dataset("R", 100, 4, 22), dir.path());
    auto config = mock_config({target});
    config.cross_reference = DatasetSource{refs.manifest, refs.features};
    const auto report = run_experiment(config);
    CHECK(report.find("T", Mode::Rag)->count == 60);
    CHECK(report.config.cross_reference == "R");
}

TEST_CASE("per-image failures are counted and the run continues") {
    testing::TempDir dir;
    auto files = testing::write_dataset(testing::synthetic_dataset("S", 50, 4, 4), dir.path());
    auto config = mock_config({files});
    config.backend.kind = BackendConfig::Kind::Replay;
    testing::write_text(dir / "empty.jsonl", "");
    config.backend.replay_path = (dir / "empty.jsonl").string();
    const auto report = run_experiment(config);
    const auto* rag = report.find("S", Mode::Rag);
    CHECK(rag->failures == 45);
    CHECK(rag->count == 0);
    CHECK_FALSE(rag->srcc.has_value());
    CHECK_FALSE(report.avg_for(Mode::Rag)->srcc.has_value());
}

TEST_CASE("report serialization round trips") {
    testing::TempDir dir;
    auto files = testing::write_dataset(testing::synthetic_dataset("SYN", 80, 4, 9), dir.path());
    const auto report = run_experiment(mock_config({files}));
    const auto doc = report_to_json(report);
    CHECK(report_to_json(report_from_json(doc)) == doc);
    CHECK(doc["config"]["ratio"] == "1:9");
    CHECK(doc["config"]["seed"] == 7);
    CHECK(doc["config"]["default_weights"] == true);

    const auto csv = report_to_csv(report);
    const auto header = csv.substr(0, csv.find('\n'));
    CHECK(header.find("SYN SRCC") != std::string::npos);
    CHECK(header.find("COM PLCC") != std::string::npos);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

TEST_CASE("experiment config parsing") {
    auto doc = json::parse(R"({
        "datasets": [{"manifest": "a.jsonl", "features": "a.iqft"}],
        "ratio": "2:8", "seed": 3, "modes": ["rag"], "k": 10,
        "weights": [1, 0.8, 0.5, 0.2, 0],
        "backend": {"kind": "mock", "max_concurrency": 2}
    })");
    auto c = ExperimentConfig::from_json(doc, "/data");
    CHECK(c.datasets[0].manifest == std::filesystem::path("/data/a.jsonl"));
    CHECK(c.split.ref_parts == 2);
    CHECK(c.split.seed == 3);
    CHECK(c.modes == std::vector<Mode>{Mode::Rag});
    CHECK(c.k == 10);
    CHECK(c.weights.values()[1] == 0.8);
    CHECK(c.backend.max_concurrency == 2);

    auto bad = doc;
    bad["ratoi"] = "1:1";
    CHECK_THROWS_WITH_AS(ExperimentConfig::from_json(bad), doctest::Contains("ratoi"), ValidationError);
    bad = doc;
    bad["datasets"] = json::array();
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad).validate(), ValidationError);
    bad = doc;
    bad["modes"] = json::array();
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad).validate(), ValidationError);
    bad = doc;
    bad["k"] = 0;
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad).validate(), ValidationError);
}

TEST_CASE("missing inputs surface as validation errors") {
    testing::TempDir dir;
    ExperimentConfig c;
    c.datasets.push_back({dir / "nope.jsonl", dir / "nope.iqft"});
    CHECK_THROWS_AS(run_experiment(c), FileNotFoundError);
}
