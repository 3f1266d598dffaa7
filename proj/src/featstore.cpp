#include "iqarag/featstore.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include "iqarag/io.hpp"

namespace iqarag {

static_assert(std::numeric_limits<float>::is_iec559, "float32 must be IEEE-754");

namespace {

constexpr char kMagic[4] = {'I', 'Q', 'F', 'T'};

template <typename T>
void put_le(std::string& out, T value) {
    static_assert(std::is_integral_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out.push_back(static_cast<char>((static_cast<std::make_unsigned_t<T>>(value) >> (8 * i)) & 0xFF));
    }
}

void put_string(std::string& out, const std::string& s, const char* what) {
    if (s.size() > std::numeric_limits<std::uint16_t>::max()) {
        throw ValidationError(std::string(what) + " longer than 65535 bytes");
    }
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(s.size()));
    out += s;
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    template <typename T>
    T get(const char* what) {
        need(sizeof(T), what);
        std::make_unsigned_t<T> v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            v |= static_cast<std::make_unsigned_t<T>>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(T);
        return static_cast<T>(v);
    }

    std::string_view take(std::size_t n, const char* what) {
        need(n, what);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::string get_string(const char* what) {
        const auto len = get<std::uint16_t>(what);
        return std::string(take(len, what));
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n, const char* what) const {
        if (remaining() < n) {
            throw FeatureFormatError(FeatureFormatError::Kind::Truncated,
                                     std::string("truncated feature file while reading ") + what);
        }
    }

    std::string_view bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

FeatureMatrix::FeatureMatrix(std::vector<std::string> ids, std::size_t dim, std::vector<float> data,
                             std::string encoder_tag)
    : ids_(std::move(ids)), dim_(dim), data_(std::move(data)), encoder_tag_(std::move(encoder_tag)) {
    if (dim_ == 0) throw ValidationError("feature dimension must be positive");
    if (data_.size() != ids_.size() * dim_) {
        std::ostringstream msg;
        msg << "feature data has " << data_.size() << " values, expected " << ids_.size() << " x " << dim_;
        throw ValidationError(msg.str());
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
        if (!std::isfinite(data_[i])) {
            throw ValidationError("non-finite feature value in row '" + ids_[i / dim_] + "'");
        }
    }
    index_.reserve(ids_.size());
    for (std::size_t r = 0; r < ids_.size(); ++r) {
        if (!index_.emplace(ids_[r], r).second) throw ValidationError("duplicate feature id '" + ids_[r] + "'");
    }
}

std::span<const float> FeatureMatrix::row(std::size_t r) const {
    if (r >= rows()) throw std::out_of_range("feature row out of range");
    return std::span<const float>(data_).subspan(r * dim_, dim_);
}

std::optional<std::size_t> FeatureMatrix::find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::span<const float> FeatureMatrix::row_of(std::string_view id) const {
    if (auto r = find(id)) return row(*r);
    throw ValidationError("no feature vector for id '" + std::string(id) + "'");
}

bool operator==(const FeatureMatrix& a, const FeatureMatrix& b) {
    if (a.ids_ != b.ids_ || a.dim_ != b.dim_ || a.encoder_tag_ != b.encoder_tag_) return false;
    // Bitwise, so -0.0f and 0.0f differ.
    return a.data_.size() == b.data_.size() &&
           std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(float)) == 0;
}

std::string encode_features(const FeatureMatrix& m) {
    if (m.dim() > std::numeric_limits<std::uint32_t>::max()) throw ValidationError("dimension exceeds u32");
    std::string out;
    out.reserve(32 + m.encoder_tag().size() + m.data().size() * 4 + m.rows() * 16);
    out.append(kMagic, sizeof(kMagic));
    put_le<std::uint32_t>(out, kFeatureFormatVersion);
    put_le<std::uint64_t>(out, m.rows());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.dim()));
    put_string(out, m.encoder_tag(), "encoder tag");
    for (float v : m.data()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    for (const auto& id : m.ids()) put_string(out, id, "id");
    return out;
}

FeatureMatrix decode_features(std::string_view bytes) {
    using Kind = FeatureFormatError::Kind;
    Reader in(bytes);
    const std::size_t head = std::min(bytes.size(), sizeof(kMagic));
    if (std::memcmp(bytes.data(), kMagic, head) != 0) {
        throw FeatureFormatError(Kind::BadMagic, "bad magic: not an IQFT feature file");
    }
    if (head < sizeof(kMagic)) throw FeatureFormatError(Kind::Truncated, "truncated feature file: magic");
    in.take(sizeof(kMagic), "magic");
    const auto version = in.get<std::uint32_t>("version");
    if (version != kFeatureFormatVersion) {
        throw FeatureFormatError(Kind::UnsupportedVersion,
                                 "unsupported feature file version " + std::to_string(version));
    }
    const auto count = in.get<std::uint64_t>("count");
    const auto dim = in.get<std::uint32_t>("dim");
    std::string tag = in.get_string("encoder tag");
    if (dim == 0) throw FeatureFormatError(Kind::ShapeMismatch, "feature file declares dim 0");

    // Each row needs dim*4 payload bytes plus at least a 2-byte id length.
    const std::uint64_t per_row = static_cast<std::uint64_t>(dim) * 4 + 2;
    if (count > in.remaining() / per_row) {
        std::ostringstream msg;
        msg << "header declares " << count << " x " << dim << " but only " << in.remaining()
            << " payload bytes follow";
        throw FeatureFormatError(Kind::Truncated, msg.str());
    }

    const std::size_t n = static_cast<std::size_t>(count) * dim;
    std::vector<float> data(n);
    const auto payload = in.take(n * 4, "payload");
    for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t bits = 0;
        for (std::size_t b = 0; b < 4; ++b) {
            bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(payload[i * 4 + b])) << (8 * b);
        }
        data[i] = std::bit_cast<float>(bits);
        if (!std::isfinite(data[i])) {
            throw FeatureFormatError(Kind::NonFinite, "non-finite value at row " + std::to_string(i / dim) +
                                                          ", column " + std::to_string(i % dim));
        }
    }

    std::vector<std::string> ids;
    ids.reserve(static_cast<std::size_t>(count));
    for (std::uint64_t r = 0; r < count; ++r) ids.push_back(in.get_string("ids"));
    if (in.remaining() != 0) {
        throw FeatureFormatError(Kind::TrailingBytes,
                                 std::to_string(in.remaining()) + " unexpected bytes after the id table");
    }
    return FeatureMatrix(std::move(ids), dim, std::move(data), std::move(tag));
}

void write_features(const FeatureMatrix& matrix, const std::filesystem::path& path) {
    write_file_atomic(path, encode_features(matrix));
}

FeatureMatrix read_features(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        if (!std::filesystem::exists(path)) throw FileNotFoundError(path.string());
        throw IoError("cannot open " + path.string());
    }
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_features(bytes);
    } catch (const FeatureFormatError& e) {
        throw FeatureFormatError(e.kind(), path.string() + ": " + e.what());
    }
}

FeatureMatrix align(const FeatureMatrix& matrix, std::span<const std::string> ids) {
    std::vector<float> data;
    data.reserve(ids.size() * matrix.dim());
    for (const auto& id : ids) {
        auto r = matrix.find(id);
        if (!r) throw ValidationError("feature matrix has no row for id '" + id + "'");
        auto row = matrix.row(*r);
        data.insert(data.end(), row.begin(), row.end());
    }
    return FeatureMatrix(std::vector<std::string>(ids.begin(), ids.end()), matrix.dim(), std::move(data),
                         matrix.encoder_tag());
}

FeatureMatrix align(const FeatureMatrix& matrix, const DatasetManifest& manifest) {
    std::vector<std::string> ids;
    ids.reserve(manifest.records.size());
    for (const auto& r : manifest.records) ids.push_back(r.id);
    return align(matrix, ids);
}

}  // namespace iqarag
