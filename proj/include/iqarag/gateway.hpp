#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <unordered_map>

#include <json.hpp>

#include "iqarag/corpus.hpp"
#include "iqarag/prompt.hpp"
#include "iqarag/quality.hpp"

namespace iqarag {

inline constexpr std::string_view kBackendUrlEnv = "IQARAG_BACKEND_URL";

// Logits for the five candidate words, in canonical order.
struct LogitResponse {
    WordTable logits{};

    // Requires an object {"logits": {word: number}} covering every word with
    // finite values; extra keys are ignored. Throws BackendError.
    static LogitResponse from_json(const nlohmann::json& doc);
    nlohmann::json to_json() const;

    friend bool operator==(const LogitResponse&, const LogitResponse&) = default;
};

// Raw encoded image bytes for an image id.
using ImageBytesResolver = std::function<std::string(std::string_view id)>;

// Reads `root / record.path` for ids in the catalog.
ImageBytesResolver make_file_resolver(const ImageCatalog& catalog, std::filesystem::path root);

class LogitBackend {
public:
    virtual ~LogitBackend() = default;

    virtual LogitResponse query_logits(const PromptScript& script, const ImageBytesResolver& images) = 0;
    virtual std::string name() const = 0;
    virtual std::size_t max_concurrency() const { return 1; }
};

enum class ScriptKind { Baseline, Rag };

struct MockParams {
    double baseline_sharpness = 3.0;
    double rag_sharpness = 10.0;
    double perturbation = 0.15;
    // Word centers; match the default fusion weights.
    WordTable centers{1.0, 0.75, 0.5, 0.25, 0.0};
};

// FNV-1a 64-bit hash of the id, one SplitMix64 step, top 53 bits mapped to [0,1).
double id_phase(std::string_view image_id);

// logit(w) = -s * |m' - c_w|. Baseline uses a phase-dependent perturbation of
// the oracle MOS and a softer slope; rag sees the oracle MOS directly.
LogitResponse mock_logits(double oracle_mos, ScriptKind kind, std::string_view image_id,
                          const MockParams& params = {});

// Deterministic test double keyed by the assessed image id.
class MockBackend : public LogitBackend {
public:
    explicit MockBackend(MockParams params = {}) : params_(params) {}

    void register_mos(std::string id, double oracle_mos);
    void register_catalog(const ImageCatalog& catalog);
    void register_manifest(const DatasetManifest& manifest);

    LogitResponse query_logits(const PromptScript& script, const ImageBytesResolver& images) override;
    std::string name() const override { return "mock"; }
    std::size_t max_concurrency() const override { return max_concurrency_; }
    void set_max_concurrency(std::size_t n) { max_concurrency_ = n == 0 ? 1 : n; }

private:
    MockParams params_;
    std::unordered_map<std::string, double> oracle_;
    std::size_t max_concurrency_ = 1;
};

struct BackendConfig {
    enum class Kind { Mock, Remote, Replay };

    Kind kind = Kind::Mock;
    // Remote: base URL, optional path (default /logits).
    std::string address;
    std::chrono::milliseconds timeout{120000};
    std::size_t max_concurrency = 4;
    int max_retries = 2;
    std::chrono::milliseconds backoff{250};
    MockParams mock;
    // Replay: JSON lines of recorded responses. Any kind: append responses here.
    std::string replay_path;
    std::string record_path;

    // Address from IQARAG_BACKEND_URL when unset.
    void apply_environment();
    static Kind parse_kind(std::string_view name);
    static std::string_view kind_name(Kind kind);
};

// Remote multimodal model server.
//   request:  {"prompt": <script, image parts as {"type":"image","image_b64":...}>,
//              "candidates": [...]}
//   response: {"logits": {word: number}}  or  {"error": msg} with non-2xx status
class RemoteBackend : public LogitBackend {
public:
    explicit RemoteBackend(BackendConfig config);
    ~RemoteBackend() override;

    LogitResponse query_logits(const PromptScript& script, const ImageBytesResolver& images) override;
    std::string name() const override { return "remote"; }
    std::size_t max_concurrency() const override { return config_.max_concurrency; }

    static nlohmann::json make_request(const PromptScript& script, const ImageBytesResolver& images);

private:
    LogitResponse post_once(const std::string& body);

    BackendConfig config_;
    std::string base_;
    std::string path_;
    struct Slots;
    std::unique_ptr<Slots> slots_;
};

// Recorded responses keyed by (assessed id, script kind), one JSON line each:
// {"id": ..., "kind": "baseline"|"rag", "logits": {...}}.
class ReplayBackend : public LogitBackend {
public:
    explicit ReplayBackend(const std::filesystem::path& path);

    LogitResponse query_logits(const PromptScript& script, const ImageBytesResolver& images) override;
    std::string name() const override { return "replay"; }
    std::size_t max_concurrency() const override { return 8; }

private:
    std::unordered_map<std::string, LogitResponse> responses_;
};

// Appends each response of the wrapped backend to a JSON-lines file that
// ReplayBackend can read back.
class RecordingBackend : public LogitBackend {
public:
    RecordingBackend(std::unique_ptr<LogitBackend> inner, const std::filesystem::path& path);
    ~RecordingBackend() override;

    LogitResponse query_logits(const PromptScript& script, const ImageBytesResolver& images) override;
    std::string name() const override { return inner_->name(); }
    std::size_t max_concurrency() const override { return inner_->max_concurrency(); }

private:
    std::unique_ptr<LogitBackend> inner_;
    std::mutex mutex_;
    struct Sink;
    std::unique_ptr<Sink> sink_;
};

ScriptKind script_kind(const PromptScript& script);
std::string_view script_kind_name(ScriptKind kind);

// Mock backends take oracle MOS values from `catalog`.
std::unique_ptr<LogitBackend> make_backend(const BackendConfig& config, const ImageCatalog& catalog);

}  // namespace iqarag
