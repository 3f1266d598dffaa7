#include "iqarag/evalkit.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "iqarag/error.hpp"
#include "iqarag/featstore.hpp"

namespace iqarag {

using nlohmann::json;

// ---- prediction sets ----------------------------------------------------------

void PredictionSet::add(std::string id, double predicted_value, double gt) {
    ids.push_back(std::move(id));
    predicted.push_back(predicted_value);
    ground_truth.push_back(gt);
}

MetricPair evaluate(std::span<const PredictionSet> sets, bool logistic) {
    MetricPair m;
    std::vector<double> pred, gt;
    std::unordered_set<std::string> seen;
    for (const auto& s : sets) {
        for (std::size_t i = 0; i < s.size(); ++i) {
            const std::string key = s.dataset + "/" + s.ids[i];
            if (!seen.insert(key).second) throw ValidationError("duplicate prediction id '" + key + "'");
            pred.push_back(s.predicted[i]);
            gt.push_back(s.ground_truth[i]);
        }
    }
    m.count = pred.size();
    if (pred.size() >= 2) {
        m.srcc = srcc(pred, gt);
        m.plcc = logistic ? plcc_logistic(pred, gt) : plcc(pred, gt);
    }
    return m;
}

MetricPair evaluate(const PredictionSet& set, bool logistic) { return evaluate(std::span(&set, 1), logistic); }

// ---- config ----------------------------------------------------------------

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

DatasetSource parse_source(const json& j, const std::filesystem::path& base) {
    if (!j.is_object() || !j.contains("manifest") || !j.contains("features")) {
        throw ValidationError("dataset entries need 'manifest' and 'features'");
    }
    return DatasetSource{resolve(base, j.at("manifest").get<std::string>()),
                         resolve(base, j.at("features").get<std::string>())};
}

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed, const std::string& where) {
    for (const auto& [key, _] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ValidationError("unknown key '" + key + "' in " + where);
        }
    }
}

std::vector<Mode> parse_modes(const json& j) {
    if (j.is_string()) {
        if (j == "both") return {Mode::Baseline, Mode::Rag};
        return {parse_mode(j.get<std::string>())};
    }
    std::vector<Mode> modes;
    for (const auto& m : j) modes.push_back(parse_mode(m.get<std::string>()));
    return modes;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& doc, const std::filesystem::path& base) {
    if (!doc.is_object()) throw ValidationError("experiment config must be a JSON object");
    check_keys(doc,
               {"datasets", "ratio", "seed", "modes", "k", "max_anchors", "weights", "backend", "anchor_order",
                "level_format", "metric", "cross_reference", "image_root", "logistic_plcc", "predictions"},
               "experiment config");
    ExperimentConfig c;
    try {
        if (doc.contains("datasets")) {
            for (const auto& d : doc["datasets"]) c.datasets.push_back(parse_source(d, base));
        }
        const std::uint64_t seed = doc.value("seed", std::uint64_t{0});
        c.split = SplitSpec::parse_ratio(doc.value("ratio", std::string("1:9")), seed);
        if (doc.contains("modes")) c.modes = parse_modes(doc["modes"]);
        c.k = doc.value("k", kDefaultK);
        c.max_anchors = doc.value("max_anchors", kMaxAnchors);
        if (doc.contains("weights")) {
            const auto& w = doc["weights"];
            if (w.is_string()) {
                c.weights = QualityWeights::parse(w.get<std::string>());
            } else {
                if (!w.is_array() || w.size() != kWordCount) throw ValidationError("weights must list 5 values");
                WordTable t{};
                for (std::size_t i = 0; i < kWordCount; ++i) t[i] = w[i].get<double>();
                c.weights = QualityWeights(t);
            }
        }
        if (doc.contains("backend")) {
            const auto& b = doc["backend"];
            check_keys(b,
                       {"kind", "address", "timeout_ms", "max_concurrency", "max_retries", "backoff_ms", "replay_path",
                        "record_path", "mock"},
                       "backend config");
            c.backend.kind = BackendConfig::parse_kind(b.value("kind", std::string("mock")));
            c.backend.address = b.value("address", std::string{});
            c.backend.timeout = std::chrono::milliseconds(b.value("timeout_ms", std::int64_t{120000}));
            c.backend.max_concurrency = b.value("max_concurrency", std::size_t{4});
            c.backend.max_retries = b.value("max_retries", 2);
            c.backend.backoff = std::chrono::milliseconds(b.value("backoff_ms", std::int64_t{250}));
            if (b.contains("replay_path")) c.backend.replay_path = resolve(base, b["replay_path"].get<std::string>());
            if (b.contains("record_path")) c.backend.record_path = resolve(base, b["record_path"].get<std::string>());
            if (b.contains("mock")) {
                const auto& m = b["mock"];
                check_keys(m, {"baseline_sharpness", "rag_sharpness", "perturbation"}, "mock config");
                c.backend.mock.baseline_sharpness = m.value("baseline_sharpness", c.backend.mock.baseline_sharpness);
                c.backend.mock.rag_sharpness = m.value("rag_sharpness", c.backend.mock.rag_sharpness);
                c.backend.mock.perturbation = m.value("perturbation", c.backend.mock.perturbation);
            }
        }
        c.prompt.order = parse_anchor_order(doc.value("anchor_order", std::string("ascending")));
        c.prompt.level = parse_level_format(doc.value("level_format", std::string("word")));
        c.metric = parse_metric(doc.value("metric", std::string("l2")));
        if (doc.contains("cross_reference") && !doc["cross_reference"].is_null()) {
            c.cross_reference = parse_source(doc["cross_reference"], base);
        }
        if (doc.contains("image_root")) c.image_root = resolve(base, doc["image_root"].get<std::string>());
        c.logistic_plcc = doc.value("logistic_plcc", false);
        if (doc.contains("predictions")) c.predictions_path = resolve(base, doc["predictions"].get<std::string>());
    } catch (const json::exception& e) {
        throw ValidationError(std::string("experiment config: ") + e.what());
    }
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FileNotFoundError(path.string());
    auto doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw ValidationError(path.string() + ": invalid JSON");
    return from_json(doc, path.parent_path());
}

void ExperimentConfig::validate() const {
    if (datasets.empty()) throw ValidationError("experiment needs at least one dataset");
    if (modes.empty()) throw ValidationError("experiment needs at least one mode");
    if (k == 0) throw ValidationError("k must be at least 1");
    if (max_anchors == 0 || max_anchors > kMaxAnchors) throw ValidationError("max_anchors must be in 1..5");
    if (backend.max_concurrency == 0) throw ValidationError("max_concurrency must be at least 1");
    std::set<Mode> unique(modes.begin(), modes.end());
    if (unique.size() != modes.size()) throw ValidationError("duplicate mode in experiment config");
}

// ---- run -------------------------------------------------------------------

namespace {

struct Outcome {
    std::optional<Prediction> prediction;
    std::string error;
};

std::vector<Outcome> predict_all(const PredictionContext& ctx, const std::vector<std::string>& ids, Mode mode,
                                 std::size_t concurrency) {
    std::vector<Outcome> out(ids.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < ids.size(); i = next++) {
            try {
                out[i].prediction = predict(ctx, ids[i], mode);
            } catch (const Error& e) {
                out[i].error = e.what();
            }
        }
    };
    const std::size_t workers = std::clamp<std::size_t>(concurrency, 1, std::max<std::size_t>(ids.size(), 1));
    if (workers == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    }
    return out;
}

std::optional<double> mean_of(const std::vector<std::optional<double>>& values) {
    if (values.empty()) return std::nullopt;
    double sum = 0.0;
    for (const auto& v : values) {
        if (!v) return std::nullopt;
        sum += *v;
    }
    return sum / static_cast<double>(values.size());
}

}  // namespace

const MetricPair* MetricReport::find(const std::string& dataset, Mode mode) const {
    for (const auto& d : datasets) {
        if (d.name != dataset) continue;
        for (const auto& m : d.modes) {
            if (m.mode == mode) return &m.metrics;
        }
    }
    return nullptr;
}

const MetricPair* MetricReport::avg_for(Mode mode) const {
    for (const auto& m : avg) {
        if (m.mode == mode) return &m.metrics;
    }
    return nullptr;
}

const MetricPair* MetricReport::com_for(Mode mode) const {
    for (const auto& m : com) {
        if (m.mode == mode) return &m.metrics;
    }
    return nullptr;
}

MetricReport run_experiment(const ExperimentConfig& config) {
    config.validate();

    struct Loaded {
        DatasetManifest manifest;
        FeatureMatrix features;
    };
    auto load = [](const DatasetSource& src) {
        auto manifest = load_manifest(src.manifest);
        auto features = align(read_features(src.features), manifest);
        return Loaded{std::move(manifest), std::move(features)};
    };

    std::vector<Loaded> datasets;
    std::set<std::string> names;
    for (const auto& src : config.datasets) {
        datasets.push_back(load(src));
        if (!names.insert(datasets.back().manifest.name).second) {
            throw ValidationError("two datasets share the name '" + datasets.back().manifest.name + "'");
        }
    }
    std::optional<Loaded> cross;
    if (config.cross_reference) cross = load(*config.cross_reference);

    MetricReport report;
    auto& echo = report.config;
    echo.ratio = config.split.ratio_string();
    echo.seed = config.split.seed;
    echo.k = config.k;
    echo.max_anchors = config.max_anchors;
    echo.weights = config.weights.to_string();
    echo.default_weights = config.weights.is_default();
    echo.backend = std::string(BackendConfig::kind_name(config.backend.kind));
    for (Mode m : config.modes) echo.modes.emplace_back(mode_name(m));
    echo.metric = std::string(metric_name(config.metric));
    echo.anchor_order = std::string(anchor_order_name(config.prompt.order));
    echo.level_format = config.prompt.level == LevelFormat::Word ? "word" : "numeric";
    echo.logistic_plcc = config.logistic_plcc;
    if (cross) echo.cross_reference = cross->manifest.name;

    std::ofstream predictions;
    if (!config.predictions_path.empty()) {
        predictions.open(config.predictions_path, std::ios::trunc);
        if (!predictions) throw IoError("cannot write " + config.predictions_path.string());
    }

    std::vector<std::vector<PredictionSet>> by_mode(config.modes.size());
    for (auto& data : datasets) {
        ImageCatalog catalog(data.manifest);
        std::vector<std::string> test_ids;
        std::optional<RetrievalIndex> index;
        if (cross) {
            catalog.add(cross->manifest);
            for (const auto& r : data.manifest.records) test_ids.push_back(r.id);
            index = RetrievalIndex::build(cross->features, cross->manifest, config.metric);
        } else {
            auto parts = split(data.manifest, config.split);
            test_ids = std::move(parts.test_ids);
            if (!parts.reference_ids.empty()) {
                index = RetrievalIndex::build(data.features, select(data.manifest, parts.reference_ids), config.metric);
            }
        }

        auto backend = make_backend(config.backend, catalog);
        PredictionContext ctx;
        ctx.index = index ? &*index : nullptr;
        ctx.query_features = &data.features;
        ctx.catalog = &catalog;
        ctx.backend = backend.get();
        ctx.images = make_file_resolver(catalog, config.image_root);
        ctx.weights = config.weights;
        ctx.k = config.k;
        ctx.max_anchors = config.max_anchors;
        ctx.prompt = config.prompt;

        DatasetMetrics dm{data.manifest.name, {}};
        for (std::size_t mi = 0; mi < config.modes.size(); ++mi) {
            const Mode mode = config.modes[mi];
            PredictionSet set{data.manifest.name, {}, {}, {}};
            std::size_t failures = 0, fallbacks = 0;

            if (mode == Mode::Rag && !index) {
                failures = test_ids.size();
            } else {
                auto outcomes = predict_all(ctx, test_ids, mode, backend->max_concurrency());
                for (std::size_t i = 0; i < outcomes.size(); ++i) {
                    const auto& o = outcomes[i];
                    if (!o.prediction) {
                        ++failures;
                        if (predictions.is_open()) {
                            predictions << json{{"dataset", data.manifest.name}, {"id", test_ids[i]},
                                                {"mode", mode_name(mode)}, {"error", o.error}}
                                               .dump()
                                        << '\n';
                        }
                        continue;
                    }
                    if (o.prediction->fallback) ++fallbacks;
                    set.add(test_ids[i], o.prediction->score.value, catalog.at(test_ids[i]).mos_norm);
                    if (predictions.is_open()) {
                        auto line = to_json(*o.prediction);
                        line["dataset"] = data.manifest.name;
                        predictions << line.dump() << '\n';
                    }
                }
            }
            MetricPair metrics = evaluate(set, config.logistic_plcc);
            metrics.failures = failures;
            metrics.fallbacks = fallbacks;
            dm.modes.push_back({mode, metrics});
            by_mode[mi].push_back(std::move(set));
        }
        report.datasets.push_back(std::move(dm));
    }

    for (std::size_t mi = 0; mi < config.modes.size(); ++mi) {
        const Mode mode = config.modes[mi];
        std::vector<std::optional<double>> s, p;
        MetricPair avg;
        for (const auto& d : report.datasets) {
            const auto& m = d.modes[mi].metrics;
            s.push_back(m.srcc);
            p.push_back(m.plcc);
            avg.count += m.count;
            avg.failures += m.failures;
            avg.fallbacks += m.fallbacks;
        }
        avg.srcc = mean_of(s);
        avg.plcc = mean_of(p);
        report.avg.push_back({mode, avg});

        MetricPair com = evaluate(by_mode[mi], config.logistic_plcc);
        com.failures = avg.failures;
        com.fallbacks = avg.fallbacks;
        report.com.push_back({mode, com});
    }
    return report;
}

// ---- serialization ---------------------------------------------------------

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from(const json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<double>();
}

json pair_json(const MetricPair& m) {
    return json{{"srcc", opt(m.srcc)},
                {"plcc", opt(m.plcc)},
                {"count", m.count},
                {"failures", m.failures},
                {"fallbacks", m.fallbacks}};
}

MetricPair pair_from(const json& j) {
    MetricPair m;
    m.srcc = opt_from(j, "srcc");
    m.plcc = opt_from(j, "plcc");
    m.count = j.value("count", std::size_t{0});
    m.failures = j.value("failures", std::size_t{0});
    m.fallbacks = j.value("fallbacks", std::size_t{0});
    return m;
}

json modes_json(const std::vector<ModeMetrics>& modes) {
    json obj = json::object();
    for (const auto& m : modes) obj[std::string(mode_name(m.mode))] = pair_json(m.metrics);
    return obj;
}

std::vector<ModeMetrics> modes_from(const json& obj, const std::vector<std::string>& order) {
    std::vector<ModeMetrics> out;
    for (const auto& name : order) {
        if (obj.contains(name)) out.push_back({parse_mode(name), pair_from(obj[name])});
    }
    return out;
}

std::string fmt(const std::optional<double>& v, int precision = 4) {
    if (!v) return "NA";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.*f", precision, *v);
    return buf;
}

std::string signed_fmt(const std::optional<double>& v) {
    if (!v) return "NA";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%+.4f", *v);
    return buf;
}

}  // namespace

json report_to_json(const MetricReport& r) {
    const auto& c = r.config;
    json config{{"ratio", c.ratio},
                {"seed", c.seed},
                {"k", c.k},
                {"max_anchors", c.max_anchors},
                {"weights", c.weights},
                {"default_weights", c.default_weights},
                {"backend", c.backend},
                {"modes", c.modes},
                {"metric", c.metric},
                {"anchor_order", c.anchor_order},
                {"level_format", c.level_format},
                {"logistic_plcc", c.logistic_plcc},
                {"cross_reference", c.cross_reference.empty() ? json(nullptr) : json(c.cross_reference)}};
    json datasets = json::array();
    for (const auto& d : r.datasets) datasets.push_back({{"name", d.name}, {"modes", modes_json(d.modes)}});
    return json{{"config", std::move(config)},
                {"datasets", std::move(datasets)},
                {"avg", modes_json(r.avg)},
                {"com", modes_json(r.com)}};
}

MetricReport report_from_json(const json& doc) {
    try {
        MetricReport r;
        const auto& c = doc.at("config");
        r.config.ratio = c.at("ratio").get<std::string>();
        r.config.seed = c.at("seed").get<std::uint64_t>();
        r.config.k = c.at("k").get<std::size_t>();
        r.config.max_anchors = c.at("max_anchors").get<std::size_t>();
        r.config.weights = c.at("weights").get<std::string>();
        r.config.default_weights = c.at("default_weights").get<bool>();
        r.config.backend = c.at("backend").get<std::string>();
        r.config.modes = c.at("modes").get<std::vector<std::string>>();
        r.config.metric = c.value("metric", std::string("l2"));
        r.config.anchor_order = c.value("anchor_order", std::string("ascending"));
        r.config.level_format = c.value("level_format", std::string("word"));
        r.config.logistic_plcc = c.value("logistic_plcc", false);
        if (c.contains("cross_reference") && c["cross_reference"].is_string()) {
            r.config.cross_reference = c["cross_reference"].get<std::string>();
        }
        for (const auto& d : doc.at("datasets")) {
            r.datasets.push_back({d.at("name").get<std::string>(), modes_from(d.at("modes"), r.config.modes)});
        }
        r.avg = modes_from(doc.at("avg"), r.config.modes);
        r.com = modes_from(doc.at("com"), r.config.modes);
        return r;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed report: ") + e.what());
    }
}

std::string report_to_csv(const MetricReport& r) {
    std::ostringstream out;
    out << "mode";
    for (const auto& d : r.datasets) out << ',' << d.name << " SRCC," << d.name << " PLCC";
    out << ",AVG SRCC,AVG PLCC,COM SRCC,COM PLCC\n";
    for (const auto& name : r.config.modes) {
        const Mode mode = parse_mode(name);
        out << name;
        for (const auto& d : r.datasets) {
            const auto* m = r.find(d.name, mode);
            out << ',' << fmt(m ? m->srcc : std::nullopt) << ',' << fmt(m ? m->plcc : std::nullopt);
        }
        const auto* a = r.avg_for(mode);
        const auto* c = r.com_for(mode);
        out << ',' << fmt(a ? a->srcc : std::nullopt) << ',' << fmt(a ? a->plcc : std::nullopt) << ','
            << fmt(c ? c->srcc : std::nullopt) << ',' << fmt(c ? c->plcc : std::nullopt) << '\n';
    }
    return out.str();
}

std::vector<DeltaRow> compare(const MetricReport& report) {
    if (!report.avg_for(Mode::Baseline) || !report.avg_for(Mode::Rag)) {
        throw ValidationError("compare needs a report containing both baseline and rag results");
    }
    auto diff = [](const std::optional<double>& a, const std::optional<double>& b) -> std::optional<double> {
        if (!a || !b) return std::nullopt;
        return *a - *b;
    };
    auto row = [&](std::string name, const MetricPair* rag, const MetricPair* base) {
        return DeltaRow{std::move(name), diff(rag->srcc, base->srcc), diff(rag->plcc, base->plcc)};
    };
    std::vector<DeltaRow> rows;
    for (const auto& d : report.datasets) {
        rows.push_back(row(d.name, report.find(d.name, Mode::Rag), report.find(d.name, Mode::Baseline)));
    }
    rows.push_back(row("AVG", report.avg_for(Mode::Rag), report.avg_for(Mode::Baseline)));
    rows.push_back(row("COM", report.com_for(Mode::Rag), report.com_for(Mode::Baseline)));
    return rows;
}

json deltas_to_json(const std::vector<DeltaRow>& rows) {
    json out = json::array();
    for (const auto& r : rows) out.push_back({{"name", r.name}, {"delta_srcc", opt(r.srcc)}, {"delta_plcc", opt(r.plcc)}});
    return out;
}

std::string format_deltas(const std::vector<DeltaRow>& rows) {
    std::size_t width = 7;
    for (const auto& r : rows) width = std::max(width, r.name.size());
    std::ostringstream out;
    out << std::left << std::setw(static_cast<int>(width)) << "dataset" << "  dSRCC    dPLCC\n";
    for (const auto& r : rows) {
        out << std::left << std::setw(static_cast<int>(width)) << r.name << "  " << std::setw(7) << signed_fmt(r.srcc)
            << "  " << signed_fmt(r.plcc) << '\n';
    }
    return out.str();
}

}  // namespace iqarag
