#include "iqarag/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "iqarag/error.hpp"
#include "iqarag/io.hpp"
#include "iqarag/rng.hpp"

namespace iqarag {

using nlohmann::json;

namespace {

std::string where(const std::string& source, std::size_t line) {
    return source + ":" + std::to_string(line) + ": ";
}

double require_number(const json& obj, const char* key, const std::string& loc) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ValidationError(loc + "missing field '" + key + "'");
    if (!it->is_number()) throw ValidationError(loc + "field '" + key + "' must be a number");
    const double v = it->get<double>();
    if (!std::isfinite(v)) throw ValidationError(loc + "field '" + key + "' must be finite");
    return v;
}

std::string require_string(const json& obj, const char* key, const std::string& loc) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ValidationError(loc + "missing field '" + key + "'");
    if (!it->is_string()) throw ValidationError(loc + "field '" + key + "' must be a string");
    return it->get<std::string>();
}

void check_scale(double lo, double hi, const std::string& loc) {
    if (!(lo < hi)) throw ValidationError(loc + "scale_min must be less than scale_max");
}

}  // namespace

const ImageRecord* DatasetManifest::find(std::string_view id) const {
    auto it = std::find_if(records.begin(), records.end(), [&](const ImageRecord& r) { return r.id == id; });
    return it == records.end() ? nullptr : &*it;
}

double normalize_mos(double mos_raw, double scale_min, double scale_max) {
    check_scale(scale_min, scale_max, "");
    if (!(mos_raw >= scale_min && mos_raw <= scale_max)) {
        std::ostringstream msg;
        msg << "mos_raw " << mos_raw << " outside scale [" << scale_min << ", " << scale_max << "]";
        throw ValidationError(msg.str());
    }
    return std::clamp((mos_raw - scale_min) / (scale_max - scale_min), 0.0, 1.0);
}

DatasetManifest make_manifest(std::string name, double scale_min, double scale_max,
                              std::vector<ImageRecord> records) {
    check_scale(scale_min, scale_max, name + ": ");
    if (records.empty()) throw ValidationError(name + ": manifest has no records");
    std::unordered_set<std::string> seen;
    for (auto& r : records) {
        if (r.id.empty()) throw ValidationError(name + ": record with empty id");
        if (!seen.insert(r.id).second) throw ValidationError(name + ": duplicate id '" + r.id + "'");
        try {
            r.mos_norm = normalize_mos(r.mos_raw, scale_min, scale_max);
        } catch (const ValidationError& e) {
            throw ValidationError(name + ": record '" + r.id + "': " + e.what());
        }
    }
    return DatasetManifest{std::move(name), scale_min, scale_max, std::move(records)};
}

DatasetManifest parse_manifest(std::istream& in, const std::string& source) {
    DatasetManifest manifest;
    bool have_header = false;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;

    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;

        const std::string loc = where(source, lineno);
        json obj = json::parse(line, nullptr, /*allow_exceptions=*/false);
        if (obj.is_discarded() || !obj.is_object()) throw ValidationError(loc + "malformed JSON object");

        if (!have_header) {
            manifest.name = require_string(obj, "name", loc);
            manifest.scale_min = require_number(obj, "scale_min", loc);
            manifest.scale_max = require_number(obj, "scale_max", loc);
            check_scale(manifest.scale_min, manifest.scale_max, loc);
            have_header = true;
            continue;
        }

        ImageRecord rec;
        rec.id = require_string(obj, "id", loc);
        rec.path = require_string(obj, "path", loc);
        rec.dataset = obj.contains("dataset") ? require_string(obj, "dataset", loc) : manifest.name;
        rec.mos_raw = require_number(obj, "mos_raw", loc);
        if (rec.id.empty()) throw ValidationError(loc + "empty id");
        if (!seen.insert(rec.id).second) throw ValidationError(loc + "duplicate id '" + rec.id + "'");
        if (rec.mos_raw < manifest.scale_min || rec.mos_raw > manifest.scale_max) {
            std::ostringstream msg;
            msg << loc << "mos_raw " << rec.mos_raw << " outside declared scale [" << manifest.scale_min
                << ", " << manifest.scale_max << "]";
            throw ValidationError(msg.str());
        }
        rec.mos_norm = normalize_mos(rec.mos_raw, manifest.scale_min, manifest.scale_max);
        manifest.records.push_back(std::move(rec));
    }

    if (!have_header) throw ValidationError(source + ": missing header line");
    if (manifest.records.empty()) throw ValidationError(source + ": manifest has no records");
    return manifest;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        if (!std::filesystem::exists(path)) throw FileNotFoundError(path.string());
        throw IoError("cannot open " + path.string());
    }
    return parse_manifest(in, path.string());
}

void write_manifest(const DatasetManifest& manifest, std::ostream& out) {
    out << json{{"name", manifest.name}, {"scale_min", manifest.scale_min}, {"scale_max", manifest.scale_max}}.dump()
        << '\n';
    for (const auto& r : manifest.records) {
        out << json{{"id", r.id}, {"path", r.path}, {"dataset", r.dataset}, {"mos_raw", r.mos_raw}}.dump() << '\n';
    }
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    std::ostringstream out;
    write_manifest(manifest, out);
    write_file_atomic(path, out.str());
}

SplitSpec SplitSpec::parse_ratio(std::string_view ratio, std::uint64_t seed) {
    const auto colon = ratio.find(':');
    auto parse_part = [&](std::string_view part) {
        std::uint32_t v = 0;
        auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
        if (ec != std::errc{} || ptr != part.data() + part.size() || v == 0) {
            throw ValidationError("invalid ratio '" + std::string(ratio) + "': expected A:B with positive integers");
        }
        return v;
    };
    if (colon == std::string_view::npos) {
        throw ValidationError("invalid ratio '" + std::string(ratio) + "': expected A:B");
    }
    return SplitSpec{parse_part(ratio.substr(0, colon)), parse_part(ratio.substr(colon + 1)), seed};
}

std::string SplitSpec::ratio_string() const {
    return std::to_string(ref_parts) + ":" + std::to_string(test_parts);
}

std::size_t reference_count(std::size_t total, const SplitSpec& spec) {
    if (spec.ref_parts == 0 || spec.test_parts == 0) throw ValidationError("split parts must be positive");
    // floor(total * ref / parts) without overflowing the intermediate product.
    const std::uint64_t parts = std::uint64_t{spec.ref_parts} + spec.test_parts;
    const std::uint64_t n = total;
    return static_cast<std::size_t>((n / parts) * spec.ref_parts + (n % parts) * spec.ref_parts / parts);
}

SplitResult split(const DatasetManifest& manifest, const SplitSpec& spec) {
    if (manifest.records.empty()) throw ValidationError("cannot split an empty manifest");
    const std::size_t n = manifest.records.size();
    const std::size_t n_ref = reference_count(n, spec);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    seeded_shuffle(order, spec.seed);

    std::vector<bool> is_ref(n, false);
    for (std::size_t i = 0; i < n_ref; ++i) is_ref[order[i]] = true;

    SplitResult result;
    result.reference_ids.reserve(n_ref);
    result.test_ids.reserve(n - n_ref);
    for (std::size_t i = 0; i < n; ++i) {
        (is_ref[i] ? result.reference_ids : result.test_ids).push_back(manifest.records[i].id);
    }
    return result;
}

DatasetManifest select(const DatasetManifest& manifest, std::span<const std::string> ids) {
    std::unordered_set<std::string_view> wanted(ids.begin(), ids.end());
    DatasetManifest out{manifest.name, manifest.scale_min, manifest.scale_max, {}};
    out.records.reserve(ids.size());
    for (const auto& r : manifest.records) {
        if (wanted.erase(r.id) > 0) out.records.push_back(r);
    }
    if (!wanted.empty()) {
        throw ValidationError("id '" + std::string(*wanted.begin()) + "' not in manifest " + manifest.name);
    }
    return out;
}

DatasetManifest pool(std::span<const DatasetManifest> manifests, std::string name) {
    std::vector<ImageRecord> records;
    std::unordered_set<std::string> seen;
    for (const auto& m : manifests) {
        for (const auto& r : m.records) {
            ImageRecord p = r;
            p.id = m.name + "/" + r.id;
            p.dataset = m.name;
            p.mos_raw = r.mos_norm;
            p.mos_norm = r.mos_norm;
            if (!seen.insert(p.id).second) throw ValidationError("id collision after pooling: '" + p.id + "'");
            records.push_back(std::move(p));
        }
    }
    return make_manifest(std::move(name), 0.0, 1.0, std::move(records));
}

void ImageCatalog::add(const DatasetManifest& manifest) {
    for (const auto& r : manifest.records) {
        auto [it, inserted] = records_.try_emplace(r.id, r);
        if (!inserted && it->second.path != r.path) {
            throw ValidationError("image id '" + r.id + "' maps to two different paths");
        }
    }
}

const ImageRecord* ImageCatalog::find(std::string_view id) const {
    auto it = records_.find(std::string(id));
    return it == records_.end() ? nullptr : &it->second;
}

const ImageRecord& ImageCatalog::at(std::string_view id) const {
    if (const auto* r = find(id)) return *r;
    throw ValidationError("unknown image id '" + std::string(id) + "'");
}

}  // namespace iqarag
