#include <cmath>
#include <fstream>
#include <iterator>

#include <httplib.h>
#include <json.hpp>

#include "base64.hpp"
#include "http_url.hpp"
#include "iqarag/featstore.hpp"

namespace iqarag {

using nlohmann::json;

namespace {

std::string read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        if (!std::filesystem::exists(path)) throw FileNotFoundError(path.string());
        throw IoError("cannot open " + path.string());
    }
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::string error_message(const httplib::Result& res) {
    auto doc = json::parse(res->body, nullptr, false);
    if (doc.is_object() && doc.contains("error") && doc["error"].is_string()) return doc["error"].get<std::string>();
    return "HTTP " + std::to_string(res->status);
}

struct Batch {
    std::size_t dim = 0;
    std::vector<std::vector<float>> vectors;
};

Batch post_batch(httplib::Client& client, const std::string& path, const std::string& encoder,
                 std::span<const ImageRecord> images, const std::filesystem::path& root) {
    json encoded = json::array();
    for (const auto& rec : images) encoded.push_back(detail::base64_encode(read_file_bytes(root / rec.path)));
    const json request{{"images", std::move(encoded)}, {"encoder", encoder}};

    auto res = client.Post(path, request.dump(), "application/json");
    if (!res) throw TransportError("embedding service unreachable: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300) {
        throw BackendError("embedding service error: " + error_message(res));
    }

    auto doc = json::parse(res->body, nullptr, false);
    if (!doc.is_object() || !doc.contains("dim") || !doc.contains("vectors") || !doc["dim"].is_number_unsigned() ||
        !doc["vectors"].is_array()) {
        throw BackendError("embedding service returned a malformed response");
    }

    Batch batch;
    batch.dim = doc["dim"].get<std::size_t>();
    if (batch.dim == 0) throw BackendError("embedding service reported dim 0");
    if (doc["vectors"].size() != images.size()) {
        throw BackendError("embedding service returned " + std::to_string(doc["vectors"].size()) +
                           " vectors for " + std::to_string(images.size()) + " images");
    }
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto& v = doc["vectors"][i];
        if (!v.is_array() || v.size() != batch.dim) {
            throw BackendError("vector for '" + images[i].id + "' does not have the declared dim " +
                               std::to_string(batch.dim));
        }
        std::vector<float> row;
        row.reserve(batch.dim);
        for (const auto& x : v) {
            if (!x.is_number()) throw BackendError("non-numeric feature value for '" + images[i].id + "'");
            const auto f = x.get<float>();
            if (!std::isfinite(f)) throw BackendError("non-finite feature value for '" + images[i].id + "'");
            row.push_back(f);
        }
        batch.vectors.push_back(std::move(row));
    }
    return batch;
}

}  // namespace

FeatureMatrix fetch_embeddings(const EmbeddingClientOptions& options, std::span<const ImageRecord> images) {
    const auto url = detail::parse_http_url(options.endpoint, "/embed");
    if (options.batch_size == 0) throw ValidationError("batch size must be positive");

    httplib::Client client(url.base);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    std::size_t dim = 0;
    std::vector<std::string> ids;
    std::vector<float> data;
    ids.reserve(images.size());

    if (images.empty()) {
        dim = post_batch(client, url.path, options.encoder, {}, options.image_root).dim;
    }
    for (std::size_t start = 0; start < images.size(); start += options.batch_size) {
        const auto chunk = images.subspan(start, std::min(options.batch_size, images.size() - start));
        auto batch = post_batch(client, url.path, options.encoder, chunk, options.image_root);
        if (dim == 0) {
            dim = batch.dim;
        } else if (batch.dim != dim) {
            throw BackendError("embedding dimension drifted from " + std::to_string(dim) + " to " +
                               std::to_string(batch.dim) + " between batches");
        }
        for (std::size_t i = 0; i < chunk.size(); ++i) {
            ids.push_back(chunk[i].id);
            data.insert(data.end(), batch.vectors[i].begin(), batch.vectors[i].end());
        }
    }
    return FeatureMatrix(std::move(ids), dim, std::move(data), options.encoder);
}

}  // namespace iqarag
