#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "iqarag/corpus.hpp"
#include "iqarag/error.hpp"

namespace iqarag {

// N x D row-major float32 features with one id per row. Immutable.
class FeatureMatrix {
public:
    FeatureMatrix() = default;
    // Throws ValidationError on shape mismatch, duplicate ids or non-finite values.
    FeatureMatrix(std::vector<std::string> ids, std::size_t dim, std::vector<float> data,
                  std::string encoder_tag = {});

    std::size_t rows() const noexcept { return ids_.size(); }
    std::size_t dim() const noexcept { return dim_; }
    bool empty() const noexcept { return ids_.empty(); }

    const std::vector<std::string>& ids() const noexcept { return ids_; }
    const std::string& id(std::size_t row) const { return ids_.at(row); }
    const std::string& encoder_tag() const noexcept { return encoder_tag_; }

    std::span<const float> row(std::size_t r) const;
    std::span<const float> data() const noexcept { return data_; }

    std::optional<std::size_t> find(std::string_view id) const;
    // Throws ValidationError naming the id.
    std::span<const float> row_of(std::string_view id) const;

    friend bool operator==(const FeatureMatrix& a, const FeatureMatrix& b);

private:
    std::vector<std::string> ids_;
    std::size_t dim_ = 0;
    std::vector<float> data_;
    std::string encoder_tag_;
    std::unordered_map<std::string, std::size_t> index_;
};

// ---- binary file format ----------------------------------------------------
//
//   "IQFT" | version u32 | count u64 | dim u32 | tag (u16 len + UTF-8)
//   | count*dim f32 | count ids (u16 len + UTF-8 each)
//
// All integers and floats little-endian.

inline constexpr std::uint32_t kFeatureFormatVersion = 1;

class FeatureFormatError : public ValidationError {
public:
    enum class Kind { BadMagic, UnsupportedVersion, Truncated, NonFinite, ShapeMismatch, TrailingBytes };

    FeatureFormatError(Kind kind, const std::string& what) : ValidationError(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

std::string encode_features(const FeatureMatrix& matrix);
FeatureMatrix decode_features(std::string_view bytes);

// Writes to a temporary sibling and renames into place.
void write_features(const FeatureMatrix& matrix, const std::filesystem::path& path);
FeatureMatrix read_features(const std::filesystem::path& path);

// Rows reordered to `ids`; rows not listed are dropped. Missing id throws,
// naming it.
FeatureMatrix align(const FeatureMatrix& matrix, std::span<const std::string> ids);
FeatureMatrix align(const FeatureMatrix& matrix, const DatasetManifest& manifest);

// ---- embedding service client ----------------------------------------------

struct EmbeddingClientOptions {
    // "http://host:port" or "http://host:port/path"; the path defaults to /embed.
    std::string endpoint;
    std::string encoder;
    // Image paths in records are resolved against this directory.
    std::filesystem::path image_root;
    std::size_t batch_size = 16;
    std::chrono::milliseconds timeout{60000};
};

// POSTs {"images": [base64...], "encoder": tag} per batch and stacks the
// returned vectors in request order. An empty request list still makes one
// call so the service reports its dimension.
FeatureMatrix fetch_embeddings(const EmbeddingClientOptions& options,
                               std::span<const ImageRecord> images);

}  // namespace iqarag
