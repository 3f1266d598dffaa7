// iqarag: retrieval-augmented image quality scoring.
//
//   iqarag features --manifest m.jsonl --endpoint http://host:port --encoder clip --out m.iqft
//   iqarag index    --manifest m.jsonl --features m.iqft --ratio 1:9 --seed 7 --out refs
//   iqarag retrieve --manifest refs.jsonl --features m.iqft --query img42 --k 50
//   iqarag score    --manifest m.jsonl --features m.iqft --id img42 --mode both
//   iqarag eval     --config exp.json --report report.json
//   iqarag compare  --report report.json
//
// Exit status: 0 ok, 1 invalid input, 2 runtime failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "iqarag/corpus.hpp"
#include "iqarag/error.hpp"
#include "iqarag/evalkit.hpp"
#include "iqarag/featstore.hpp"
#include "iqarag/gateway.hpp"
#include "iqarag/io.hpp"
#include "iqarag/prompt.hpp"
#include "iqarag/retrieval.hpp"
#include "iqarag/scoring.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace iqarag;

namespace {

struct BackendFlags {
    std::string kind = "mock";
    std::string url;
    long timeout_ms = 120000;
    std::size_t max_concurrency = 4;
    std::string replay;
    std::string record;

    void attach(CLI::App& app) {
        app.add_option("--backend", kind, "mock|remote|replay");
        app.add_option("--backend-url", url, "remote model server (else $IQARAG_BACKEND_URL)");
        app.add_option("--timeout-ms", timeout_ms, "remote request timeout");
        app.add_option("--max-concurrency", max_concurrency, "in-flight backend requests");
        app.add_option("--replay", replay, "recorded responses (JSON lines)");
        app.add_option("--record", record, "append backend responses here");
    }

    // Only flags actually given override `config`.
    void apply(CLI::App& app, BackendConfig& config) const {
        if (app.count("--backend")) config.kind = BackendConfig::parse_kind(kind);
        if (app.count("--backend-url")) config.address = url;
        if (app.count("--timeout-ms")) config.timeout = std::chrono::milliseconds(timeout_ms);
        if (app.count("--max-concurrency")) config.max_concurrency = max_concurrency;
        if (app.count("--replay")) {
            config.replay_path = replay;
            if (!app.count("--backend")) config.kind = BackendConfig::Kind::Replay;
        }
        if (app.count("--record")) config.record_path = record;
    }
};

std::vector<Mode> parse_modes(const std::string& text) {
    if (text == "both") return {Mode::Baseline, Mode::Rag};
    return {parse_mode(text)};
}

void write_json(const std::string& path, const json& doc) {
    const auto text = doc.dump(2) + "\n";
    if (path.empty() || path == "-") {
        std::cout << text;
    } else {
        write_file_atomic(path, text);
    }
}

std::string fmt(const char* format, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, format, v);
    return buf;
}

std::string opt_fmt(const std::optional<double>& v) { return v ? fmt("%.4f", *v) : "undefined"; }

// ---- features ----------------------------------------------------------------

struct FeaturesCmd {
    std::string manifest, out, endpoint, input, encoder, image_root;
    std::size_t batch = 16;
    long timeout_ms = 120000;

    void attach(CLI::App& app) {
        app.add_option("--manifest", manifest, "dataset manifest")->required();
        app.add_option("--out", out, "feature file to write")->required();
        auto* ep = app.add_option("--endpoint", endpoint, "embedding service URL");
        auto* in = app.add_option("--input", input, "existing feature file to validate and align");
        ep->excludes(in);
        app.add_option("--encoder", encoder, "encoder tag sent to the service");
        app.add_option("--image-root", image_root, "directory image paths resolve against");
        app.add_option("--batch-size", batch, "images per request");
        app.add_option("--timeout-ms", timeout_ms, "request timeout");
    }

    int run() const {
        const auto m = load_manifest(manifest);
        FeatureMatrix features;
        if (!input.empty()) {
            features = align(read_features(input), m);
        } else if (!endpoint.empty()) {
            if (encoder.empty()) throw ValidationError("--encoder is required with --endpoint");
            EmbeddingClientOptions opts;
            opts.endpoint = endpoint;
            opts.encoder = encoder;
            opts.image_root = image_root;
            opts.batch_size = batch;
            opts.timeout = std::chrono::milliseconds(timeout_ms);
            features = fetch_embeddings(opts, m.records);
        } else {
            throw ValidationError("need --endpoint or --input");
        }
        write_features(features, out);
        std::cout << "wrote " << features.rows() << " x " << features.dim() << " features (" << features.encoder_tag()
                  << ") to " << out << "\n";
        return 0;
    }
};

// ---- index -------------------------------------------------------------------

struct IndexCmd {
    std::string manifest, features, out, ratio;
    std::uint64_t seed = 0;

    void attach(CLI::App& app) {
        app.add_option("--manifest", manifest, "dataset manifest")->required();
        app.add_option("--features", features, "feature file covering the manifest")->required();
        app.add_option("--out", out, "output prefix: <out>.iqft, <out>.jsonl[, <out>.test.jsonl]")->required();
        app.add_option("--ratio", ratio, "reference:test split A:B (default: index everything)");
        app.add_option("--seed", seed, "split seed");
    }

    int run() const {
        const auto m = load_manifest(manifest);
        const auto f = read_features(features);
        auto refs = m;
        std::optional<DatasetManifest> test;
        if (!ratio.empty()) {
            const auto parts = split(m, SplitSpec::parse_ratio(ratio, seed));
            refs = select(m, parts.reference_ids);
            test = select(m, parts.test_ids);
        }
        const auto index = RetrievalIndex::build(f, refs);
        write_features(index.features(), out + ".iqft");
        save_manifest(refs, out + ".jsonl");
        if (test) save_manifest(*test, out + ".test.jsonl");
        std::cout << "indexed " << index.size() << " references (dim " << index.dim() << ")";
        if (test) std::cout << ", " << test->records.size() << " test images";
        std::cout << "\n";
        return 0;
    }
};

// ---- retrieve ----------------------------------------------------------------

struct RetrieveCmd {
    std::string manifest, features, query_features, query, metric = "l2";
    std::size_t k = kDefaultK, max_anchors = kMaxAnchors;
    unsigned workers = 1;
    bool as_json = false;

    void attach(CLI::App& app) {
        app.add_option("--manifest", manifest, "reference manifest")->required();
        app.add_option("--features", features, "feature file with the references (and the query)")->required();
        app.add_option("--query-features", query_features, "feature file holding the query row");
        app.add_option("--query", query, "query image id")->required();
        app.add_option("--k", k, "neighbors to scan");
        app.add_option("--max-anchors", max_anchors, "anchor limit (1..5)");
        app.add_option("--metric", metric, "l2|cosine");
        app.add_option("--workers", workers, "scan threads");
        app.add_flag("--json", as_json, "print JSON");
    }

    int run() const {
        const auto m = load_manifest(manifest);
        const auto f = read_features(features);
        const auto qf = query_features.empty() ? f : read_features(query_features);
        const auto qrow = qf.row_of(query);

        std::vector<std::string> ids;
        for (const auto& r : m.records) {
            if (r.id != query) ids.push_back(r.id);
        }
        const auto index = RetrievalIndex::build(f, select(m, ids), parse_metric(metric));
        const auto anchors = retrieve(index, qrow, k, query, max_anchors, workers);

        if (as_json) {
            json out{{"query", query}, {"k", k}, {"anchors", json::array()}};
            for (const auto& a : anchors.entries) {
                out["anchors"].push_back({{"id", a.id},
                                          {"mos", a.mos},
                                          {"bin", a.bin},
                                          {"level", level_word(a.mos)},
                                          {"rank", a.rank},
                                          {"distance", a.distance}});
            }
            std::cout << out.dump(2) << "\n";
            return 0;
        }
        std::cout << "query " << query << ": " << anchors.size() << " anchor(s) from k=" << k << "\n";
        std::cout << "bin  level      rank  distance    mos     id\n";
        for (const auto& a : anchors.entries) {
            std::printf("%-4d %-10s %-5zu %-11.6f %-7.4f %s\n", a.bin, std::string(level_word(a.mos)).c_str(), a.rank,
                        a.distance, a.mos, a.id.c_str());
        }
        return 0;
    }
};

// ---- score -------------------------------------------------------------------

struct ScoreCmd {
    std::string manifest, features, id, mode = "both", references, ref_features, weights, image_root;
    std::string anchor_order = "ascending", level_format = "word", metric = "l2";
    std::size_t k = kDefaultK, max_anchors = kMaxAnchors;
    bool as_json = false, show_prompt = false;
    BackendFlags backend;

    void attach(CLI::App& app) {
        app.add_option("--manifest", manifest, "manifest containing the image")->required();
        app.add_option("--features", features, "feature file containing the image")->required();
        app.add_option("--id", id, "image id")->required();
        app.add_option("--mode", mode, "baseline|rag|both");
        app.add_option("--references", references, "reference manifest (default: the rest of --manifest)");
        app.add_option("--ref-features", ref_features, "feature file for --references");
        app.add_option("--k", k, "neighbors to scan");
        app.add_option("--max-anchors", max_anchors, "anchor limit (1..5)");
        app.add_option("--metric", metric, "l2|cosine");
        app.add_option("--weights", weights, "w1,w2,w3,w4,w5 for excellent..bad");
        app.add_option("--anchor-order", anchor_order, "ascending|descending|rank");
        app.add_option("--level-format", level_format, "word|numeric");
        app.add_option("--image-root", image_root, "directory image paths resolve against");
        app.add_flag("--json", as_json, "print JSON");
        app.add_flag("--show-prompt", show_prompt, "print the prompt script");
        backend.attach(app);
    }

    int run(CLI::App& app) const {
        const auto modes = parse_modes(mode);
        const auto m = load_manifest(manifest);
        const auto f = read_features(features);

        DatasetManifest refs;
        FeatureMatrix rf;
        if (!references.empty()) {
            refs = load_manifest(references);
            rf = read_features(ref_features.empty() ? features : ref_features);
        } else {
            std::vector<std::string> ids;
            for (const auto& r : m.records) {
                if (r.id != id) ids.push_back(r.id);
            }
            refs = select(m, ids);
            rf = f;
        }

        ImageCatalog catalog(m);
        catalog.add(refs);
        std::optional<RetrievalIndex> index;
        if (!refs.records.empty()) index = RetrievalIndex::build(rf, refs, parse_metric(metric));

        BackendConfig bc;
        backend.apply(app, bc);
        auto be = make_backend(bc, catalog);

        PredictionContext ctx;
        ctx.index = index ? &*index : nullptr;
        ctx.query_features = &f;
        ctx.catalog = &catalog;
        ctx.backend = be.get();
        ctx.images = make_file_resolver(catalog, image_root);
        if (!weights.empty()) ctx.weights = QualityWeights::parse(weights);
        ctx.k = k;
        ctx.max_anchors = max_anchors;
        ctx.prompt.order = parse_anchor_order(anchor_order);
        ctx.prompt.level = parse_level_format(level_format);

        json out = json::array();
        for (Mode md : modes) {
            const auto p = predict(ctx, id, md);
            auto j = to_json(p);
            if (show_prompt) j["prompt"] = to_json(prepare_prompt(ctx, id, md));
            out.push_back(j);
            if (!as_json) {
                std::cout << mode_name(md) << "\t" << fmt("%.6f", p.score.value);
                if (!p.anchors.empty()) std::cout << "\tanchors=" << p.anchors.size();
                if (p.fallback) std::cout << "\t(no anchors, baseline prompt used)";
                std::cout << "\n";
                if (show_prompt) std::cout << serialize(prepare_prompt(ctx, id, md));
            }
        }
        if (as_json) std::cout << out.dump(2) << "\n";
        return 0;
    }
};

// ---- eval --------------------------------------------------------------------

struct EvalCmd {
    std::string config, report, csv, predictions, ratio, weights, mode, metric, anchor_order, level_format;
    std::uint64_t seed = 0;
    std::size_t k = kDefaultK, max_anchors = kMaxAnchors;
    bool logistic = false;
    BackendFlags backend;

    void attach(CLI::App& app) {
        app.add_option("--config", config, "experiment config (JSON)")->required();
        app.add_option("--report", report, "report JSON path (default: stdout)");
        app.add_option("--csv", csv, "also write the table as CSV");
        app.add_option("--predictions", predictions, "write per-image predictions (JSON lines)");
        app.add_option("--ratio", ratio, "reference:test split A:B");
        app.add_option("--seed", seed, "split seed");
        app.add_option("--k", k, "neighbors to scan");
        app.add_option("--max-anchors", max_anchors, "anchor limit (1..5)");
        app.add_option("--weights", weights, "w1,w2,w3,w4,w5 for excellent..bad");
        app.add_option("--mode", mode, "baseline|rag|both");
        app.add_option("--metric", metric, "l2|cosine");
        app.add_option("--anchor-order", anchor_order, "ascending|descending|rank");
        app.add_option("--level-format", level_format, "word|numeric");
        app.add_flag("--logistic-plcc", logistic, "fit a 4-parameter logistic before PLCC");
        backend.attach(app);
    }

    int run(CLI::App& app) const {
        auto c = ExperimentConfig::load(config);
        if (app.count("--ratio") || app.count("--seed")) {
            c.split = SplitSpec::parse_ratio(app.count("--ratio") ? ratio : c.split.ratio_string(),
                                             app.count("--seed") ? seed : c.split.seed);
        }
        if (app.count("--k")) c.k = k;
        if (app.count("--max-anchors")) c.max_anchors = max_anchors;
        if (app.count("--weights")) c.weights = QualityWeights::parse(weights);
        if (app.count("--mode")) c.modes = parse_modes(mode);
        if (app.count("--metric")) c.metric = parse_metric(metric);
        if (app.count("--anchor-order")) c.prompt.order = parse_anchor_order(anchor_order);
        if (app.count("--level-format")) c.prompt.level = parse_level_format(level_format);
        if (app.count("--logistic-plcc")) c.logistic_plcc = logistic;
        if (app.count("--predictions")) c.predictions_path = predictions;
        backend.apply(app, c.backend);

        // Predictions are streamed; stage them so a failed run leaves nothing behind.
        fs::path final_predictions = c.predictions_path;
        if (!final_predictions.empty()) c.predictions_path += ".partial";
        MetricReport r;
        try {
            r = run_experiment(c);
        } catch (...) {
            if (!final_predictions.empty()) {
                std::error_code ec;
                fs::remove(c.predictions_path, ec);
            }
            throw;
        }
        if (!final_predictions.empty()) fs::rename(c.predictions_path, final_predictions);

        write_json(report, report_to_json(r));
        if (!csv.empty()) write_file_atomic(csv, report_to_csv(r));
        if (!report.empty() && report != "-") {
            for (const auto& mm : r.com) {
                std::cerr << mode_name(mm.mode) << " COM: SRCC " << opt_fmt(mm.metrics.srcc) << "  PLCC "
                          << opt_fmt(mm.metrics.plcc) << "  (n=" << mm.metrics.count
                          << ", failures=" << mm.metrics.failures << ")\n";
            }
        }
        return 0;
    }
};

// ---- compare -----------------------------------------------------------------

struct CompareCmd {
    std::string report, out;
    bool as_json = false;

    void attach(CLI::App& app) {
        app.add_option("--report", report, "report JSON from eval")->required();
        app.add_option("--out", out, "write the delta table as JSON");
        app.add_flag("--json", as_json, "print JSON");
    }

    int run() const {
        json doc;
        try {
            doc = json::parse(read_file(report));
        } catch (const json::parse_error& e) {
            throw ValidationError(report + ": " + e.what());
        }
        const auto rows = compare(report_from_json(doc));
        if (!out.empty()) write_json(out, deltas_to_json(rows));
        if (as_json) {
            std::cout << deltas_to_json(rows).dump(2) << "\n";
        } else {
            std::cout << format_deltas(rows);
        }
        return 0;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Retrieval-augmented image quality scoring"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "iqarag 0.1.0");

    FeaturesCmd features;
    IndexCmd index;
    RetrieveCmd retrieve_cmd;
    ScoreCmd score;
    EvalCmd eval;
    CompareCmd compare_cmd;

    auto* features_app = app.add_subcommand("features", "Fetch or validate image embeddings");
    auto* index_app = app.add_subcommand("index", "Split a dataset and write the reference index");
    auto* retrieve_app = app.add_subcommand("retrieve", "Print the anchors chosen for a query");
    auto* score_app = app.add_subcommand("score", "Score one image");
    auto* eval_app = app.add_subcommand("eval", "Run an experiment and write a report");
    auto* compare_app = app.add_subcommand("compare", "Rag minus baseline deltas from a report");
    features.attach(*features_app);
    index.attach(*index_app);
    retrieve_cmd.attach(*retrieve_app);
    score.attach(*score_app);
    eval.attach(*eval_app);
    compare_cmd.attach(*compare_app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (features_app->parsed()) return features.run();
        if (index_app->parsed()) return index.run();
        if (retrieve_app->parsed()) return retrieve_cmd.run();
        if (score_app->parsed()) return score.run(*score_app);
        if (eval_app->parsed()) return eval.run(*eval_app);
        if (compare_app->parsed()) return compare_cmd.run();
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
