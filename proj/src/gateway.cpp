#include "iqarag/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <numbers>
#include <thread>

#include <httplib.h>

#include "base64.hpp"
#include "http_url.hpp"
#include "iqarag/error.hpp"
#include "iqarag/rng.hpp"

namespace iqarag {

using nlohmann::json;

// ---- LogitResponse ------------------------------------------------------------

LogitResponse LogitResponse::from_json(const json& doc) {
    if (!doc.is_object() || !doc.contains("logits") || !doc["logits"].is_object()) {
        throw BackendError("backend response has no 'logits' object");
    }
    const auto& obj = doc["logits"];
    LogitResponse out;
    for (std::size_t i = 0; i < kWordCount; ++i) {
        const std::string word(kCandidateWords[i]);
        auto it = obj.find(word);
        if (it == obj.end()) throw BackendError("backend response is missing the logit for '" + word + "'");
        if (!it->is_number()) throw BackendError("logit for '" + word + "' is not a number");
        const double v = it->get<double>();
        if (!std::isfinite(v)) throw BackendError("logit for '" + word + "' is not finite");
        out.logits[i] = v;
    }
    return out;
}

json LogitResponse::to_json() const {
    json obj = json::object();
    for (std::size_t i = 0; i < kWordCount; ++i) obj[std::string(kCandidateWords[i])] = logits[i];
    return json{{"logits", std::move(obj)}};
}

ImageBytesResolver make_file_resolver(const ImageCatalog& catalog, std::filesystem::path root) {
    return [&catalog, root = std::move(root)](std::string_view id) {
        const auto path = root / catalog.at(id).path;
        std::ifstream in(path, std::ios::binary);
        if (!in) throw FileNotFoundError(path.string());
        return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    };
}

// ---- script kind -----------------------------------------------------------

ScriptKind script_kind(const PromptScript& script) { return script.is_rag() ? ScriptKind::Rag : ScriptKind::Baseline; }

std::string_view script_kind_name(ScriptKind kind) { return kind == ScriptKind::Rag ? "rag" : "baseline"; }

// ---- mock ------------------------------------------------------------------

double id_phase(std::string_view image_id) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : image_id) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    // FNV-1a alone barely moves the top bits for ids differing in the last byte.
    return static_cast<double>(SplitMix64(h).next() >> 11) * 0x1.0p-53;
}

LogitResponse mock_logits(double oracle_mos, ScriptKind kind, std::string_view image_id, const MockParams& params) {
    if (!(oracle_mos >= 0.0 && oracle_mos <= 1.0)) throw ValidationError("oracle MOS outside [0,1]");
    double m = oracle_mos;
    double s = params.rag_sharpness;
    if (kind == ScriptKind::Baseline) {
        s = params.baseline_sharpness;
        m = std::clamp(m + params.perturbation * std::sin(2.0 * std::numbers::pi * id_phase(image_id)), 0.0, 1.0);
    }
    LogitResponse r;
    for (std::size_t i = 0; i < kWordCount; ++i) r.logits[i] = -s * std::abs(m - params.centers[i]);
    return r;
}

void MockBackend::register_mos(std::string id, double oracle_mos) {
    if (!(oracle_mos >= 0.0 && oracle_mos <= 1.0)) throw ValidationError("oracle MOS outside [0,1] for '" + id + "'");
    oracle_[std::move(id)] = oracle_mos;
}

void MockBackend::register_catalog(const ImageCatalog& catalog) {
    for (const auto& [id, rec] : catalog.entries()) register_mos(id, rec.mos_norm);
}

void MockBackend::register_manifest(const DatasetManifest& manifest) {
    for (const auto& r : manifest.records) register_mos(r.id, r.mos_norm);
}

LogitResponse MockBackend::query_logits(const PromptScript& script, const ImageBytesResolver&) {
    const auto& id = script.query_image();
    auto it = oracle_.find(id);
    if (it == oracle_.end()) throw BackendError("mock backend has no oracle MOS for '" + id + "'");
    return mock_logits(it->second, script_kind(script), id, params_);
}

// ---- config ----------------------------------------------------------------

void BackendConfig::apply_environment() {
    if (!address.empty()) return;
    if (const char* env = std::getenv(std::string(kBackendUrlEnv).c_str()); env != nullptr) address = env;
}

BackendConfig::Kind BackendConfig::parse_kind(std::string_view name) {
    if (name == "mock") return Kind::Mock;
    if (name == "remote") return Kind::Remote;
    if (name == "replay") return Kind::Replay;
    throw ValidationError("unknown backend '" + std::string(name) + "' (mock|remote|replay)");
}

std::string_view BackendConfig::kind_name(Kind kind) {
    switch (kind) {
        case Kind::Mock: return "mock";
        case Kind::Remote: return "remote";
        case Kind::Replay: return "replay";
    }
    return "?";
}

// ---- remote ----------------------------------------------------------------

struct RemoteBackend::Slots {
    std::mutex mutex;
    std::condition_variable cv;
    std::size_t free;

    explicit Slots(std::size_t n) : free(n) {}

    void acquire() {
        std::unique_lock lock(mutex);
        cv.wait(lock, [this] { return free > 0; });
        --free;
    }
    void release() {
        {
            std::lock_guard lock(mutex);
            ++free;
        }
        cv.notify_one();
    }
};

RemoteBackend::RemoteBackend(BackendConfig config) : config_(std::move(config)) {
    config_.apply_environment();
    if (config_.address.empty()) {
        throw ValidationError("remote backend needs an address (set --backend-url or " + std::string(kBackendUrlEnv) +
                              ")");
    }
    if (config_.max_concurrency == 0) throw ValidationError("max_concurrency must be at least 1");
    auto url = detail::parse_http_url(config_.address, "/logits");
    base_ = std::move(url.base);
    path_ = std::move(url.path);
    slots_ = std::make_unique<Slots>(config_.max_concurrency);
}

RemoteBackend::~RemoteBackend() = default;

json RemoteBackend::make_request(const PromptScript& script, const ImageBytesResolver& images) {
    json prompt = to_json(script);
    for (auto& part : prompt["parts"]) {
        if (part["type"] == "image") {
            const auto id = part["image_id"].get<std::string>();
            part = json{{"type", "image"}, {"image_b64", detail::base64_encode(images(id))}};
        }
    }
    return json{{"prompt", std::move(prompt)},
                {"candidates", std::vector<std::string>(kCandidateWords.begin(), kCandidateWords.end())}};
}

LogitResponse RemoteBackend::post_once(const std::string& body) {
    httplib::Client client(base_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    auto res = client.Post(path_, body, "application/json");
    if (!res) throw TransportError("backend " + base_ + path_ + ": " + httplib::to_string(res.error()));
    if (res->status == 502 || res->status == 503 || res->status == 504) {
        throw TransportError("backend temporarily unavailable (HTTP " + std::to_string(res->status) + ")");
    }
    auto doc = json::parse(res->body, nullptr, false);
    if (res->status < 200 || res->status >= 300) {
        std::string msg = "HTTP " + std::to_string(res->status);
        if (doc.is_object() && doc.contains("error") && doc["error"].is_string()) msg = doc["error"].get<std::string>();
        throw BackendError("backend error: " + msg);
    }
    if (doc.is_discarded()) throw BackendError("backend returned invalid JSON");
    return LogitResponse::from_json(doc);
}

LogitResponse RemoteBackend::query_logits(const PromptScript& script, const ImageBytesResolver& images) {
    const std::string body = make_request(script, images).dump();

    slots_->acquire();
    struct Release {
        Slots* s;
        ~Release() { s->release(); }
    } release{slots_.get()};

    for (int attempt = 0;; ++attempt) {
        try {
            return post_once(body);
        } catch (const TransportError&) {
            if (attempt >= config_.max_retries) throw;
            std::this_thread::sleep_for(config_.backoff * (1 << attempt));
        }
    }
}

// ---- replay / recording ------------------------------------------------------

namespace {

std::string replay_key(std::string_view id, ScriptKind kind) {
    return std::string(script_kind_name(kind)) + '\x1f' + std::string(id);
}

}  // namespace

ReplayBackend::ReplayBackend(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FileNotFoundError(path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto doc = json::parse(line, nullptr, false);
        if (!doc.is_object() || !doc.contains("id") || !doc.contains("kind")) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": malformed replay record");
        }
        const auto kind = doc["kind"] == "rag" ? ScriptKind::Rag : ScriptKind::Baseline;
        responses_[replay_key(doc["id"].get<std::string>(), kind)] = LogitResponse::from_json(doc);
    }
}

LogitResponse ReplayBackend::query_logits(const PromptScript& script, const ImageBytesResolver&) {
    const auto kind = script_kind(script);
    auto it = responses_.find(replay_key(script.query_image(), kind));
    if (it == responses_.end()) {
        throw BackendError("no recorded " + std::string(script_kind_name(kind)) + " response for '" +
                           script.query_image() + "'");
    }
    return it->second;
}

struct RecordingBackend::Sink {
    std::ofstream out;
};

RecordingBackend::RecordingBackend(std::unique_ptr<LogitBackend> inner, const std::filesystem::path& path)
    : inner_(std::move(inner)), sink_(std::make_unique<Sink>()) {
    sink_->out.open(path, std::ios::app);
    if (!sink_->out) throw IoError("cannot open " + path.string() + " for recording");
}

RecordingBackend::~RecordingBackend() = default;

LogitResponse RecordingBackend::query_logits(const PromptScript& script, const ImageBytesResolver& images) {
    auto response = inner_->query_logits(script, images);
    json line = response.to_json();
    line["id"] = script.query_image();
    line["kind"] = script_kind_name(script_kind(script));
    std::lock_guard lock(mutex_);
    sink_->out << line.dump() << '\n';
    sink_->out.flush();
    return response;
}

// ---- factory ---------------------------------------------------------------

std::unique_ptr<LogitBackend> make_backend(const BackendConfig& config, const ImageCatalog& catalog) {
    std::unique_ptr<LogitBackend> backend;
    switch (config.kind) {
        case BackendConfig::Kind::Mock: {
            auto mock = std::make_unique<MockBackend>(config.mock);
            mock->register_catalog(catalog);
            mock->set_max_concurrency(config.max_concurrency);
            backend = std::move(mock);
            break;
        }
        case BackendConfig::Kind::Remote:
            backend = std::make_unique<RemoteBackend>(config);
            break;
        case BackendConfig::Kind::Replay:
            if (config.replay_path.empty()) throw ValidationError("replay backend needs a recording path");
            backend = std::make_unique<ReplayBackend>(config.replay_path);
            break;
    }
    if (!config.record_path.empty()) {
        backend = std::make_unique<RecordingBackend>(std::move(backend), config.record_path);
    }
    return backend;
}

}  // namespace iqarag
