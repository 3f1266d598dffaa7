#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "iqarag/corpus.hpp"
#include "iqarag/gateway.hpp"
#include "iqarag/prompt.hpp"
#include "iqarag/retrieval.hpp"
#include "iqarag/scoring.hpp"

namespace iqarag {

// ---- correlation ----------------------------------------------------------
//
// Both return nullopt ("undefined") when either side is constant. Length
// mismatch or fewer than two points throws ValidationError.

// Ranks starting at 1; tied values share the mean of their positions.
std::vector<double> fractional_ranks(std::span<const double> values);

std::optional<double> plcc(std::span<const double> pred, std::span<const double> gt);
std::optional<double> srcc(std::span<const double> pred, std::span<const double> gt);

// Four-parameter logistic fitted by Levenberg-Marquardt, then Pearson between
// the mapped predictions and gt.
std::optional<double> plcc_logistic(std::span<const double> pred, std::span<const double> gt);

// ---- experiment -------------------------------------------------------------

struct PredictionSet {
    std::string dataset;
    std::vector<std::string> ids;
    std::vector<double> predicted;
    std::vector<double> ground_truth;

    void add(std::string id, double predicted_value, double gt);
    std::size_t size() const noexcept { return ids.size(); }
};

struct MetricPair {
    std::optional<double> srcc;
    std::optional<double> plcc;
    std::size_t count = 0;
    std::size_t failures = 0;
    std::size_t fallbacks = 0;
};

struct ModeMetrics {
    Mode mode = Mode::Baseline;
    MetricPair metrics;
};

struct DatasetMetrics {
    std::string name;
    std::vector<ModeMetrics> modes;
};

struct DatasetSource {
    std::filesystem::path manifest;
    std::filesystem::path features;
};

struct ExperimentConfig {
    std::vector<DatasetSource> datasets;
    SplitSpec split{1, 9, 0};
    std::vector<Mode> modes{Mode::Baseline, Mode::Rag};
    std::size_t k = kDefaultK;
    std::size_t max_anchors = kMaxAnchors;
    QualityWeights weights;
    BackendConfig backend;
    PromptOptions prompt;
    Metric metric = Metric::L2;
    // When set, every dataset is scored in full against this reference set.
    std::optional<DatasetSource> cross_reference;
    std::filesystem::path image_root;
    bool logistic_plcc = false;
    // Optional JSON-lines dump of every prediction.
    std::filesystem::path predictions_path;

    // Relative paths resolve against `base_dir`.
    static ExperimentConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
    static ExperimentConfig load(const std::filesystem::path& path);
    void validate() const;
};

struct ConfigEcho {
    std::string ratio;
    std::uint64_t seed = 0;
    std::size_t k = 0;
    std::size_t max_anchors = 0;
    std::string weights;
    bool default_weights = true;
    std::string backend;
    std::vector<std::string> modes;
    std::string metric;
    std::string anchor_order;
    std::string level_format;
    bool logistic_plcc = false;
    std::string cross_reference;
};

struct MetricReport {
    ConfigEcho config;
    std::vector<DatasetMetrics> datasets;
    std::vector<ModeMetrics> avg;
    std::vector<ModeMetrics> com;

    const MetricPair* find(const std::string& dataset, Mode mode) const;
    const MetricPair* avg_for(Mode mode) const;
    const MetricPair* com_for(Mode mode) const;
};

// Pooled metrics over several prediction sets.
MetricPair evaluate(std::span<const PredictionSet> sets, bool logistic = false);
MetricPair evaluate(const PredictionSet& set, bool logistic = false);

MetricReport run_experiment(const ExperimentConfig& config);

nlohmann::json report_to_json(const MetricReport& report);
MetricReport report_from_json(const nlohmann::json& doc);
// Rows = modes; columns = dataset x {SRCC, PLCC}, then AVG and COM.
std::string report_to_csv(const MetricReport& report);

struct DeltaRow {
    std::string name;
    std::optional<double> srcc;
    std::optional<double> plcc;
};

// rag - baseline per dataset, then AVG and COM rows.
std::vector<DeltaRow> compare(const MetricReport& report);
nlohmann::json deltas_to_json(const std::vector<DeltaRow>& rows);
std::string format_deltas(const std::vector<DeltaRow>& rows);

}  // namespace iqarag
