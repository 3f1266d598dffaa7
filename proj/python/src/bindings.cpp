#include <cstring>
#include <string>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "iqarag/corpus.hpp"
#include "iqarag/error.hpp"
#include "iqarag/evalkit.hpp"
#include "iqarag/featstore.hpp"
#include "iqarag/gateway.hpp"
#include "iqarag/prompt.hpp"
#include "iqarag/retrieval.hpp"
#include "iqarag/scoring.hpp"

namespace py = pybind11;
using namespace iqarag;
using nlohmann::json;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

FeatureMatrix matrix_from_numpy(std::vector<std::string> ids, const FloatArray& data, std::string tag) {
    if (data.ndim() != 2) throw ValidationError("features must be a 2-D array");
    const auto dim = static_cast<std::size_t>(data.shape(1));
    std::vector<float> values(data.data(), data.data() + data.size());
    return FeatureMatrix(std::move(ids), dim, std::move(values), std::move(tag));
}

py::array_t<float> matrix_to_numpy(const FeatureMatrix& m) {
    py::array_t<float> out({static_cast<py::ssize_t>(m.rows()), static_cast<py::ssize_t>(m.dim())});
    const auto src = m.data();
    std::memcpy(out.mutable_data(), src.data(), src.size_bytes());
    return out;
}

std::vector<float> vector_from_numpy(const FloatArray& a) {
    if (a.ndim() != 1) throw ValidationError("query must be a 1-D array");
    return {a.data(), a.data() + a.size()};
}

WordTable table_from(const std::vector<double>& v) {
    if (v.size() != kWordCount) throw ValidationError("expected 5 values (excellent..bad)");
    WordTable t{};
    std::copy(v.begin(), v.end(), t.begin());
    return t;
}

std::vector<double> table_to(const WordTable& t) { return {t.begin(), t.end()}; }

ScriptKind parse_kind(const std::string& name) {
    if (name == "baseline") return ScriptKind::Baseline;
    if (name == "rag") return ScriptKind::Rag;
    throw ValidationError("kind must be 'baseline' or 'rag'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Retrieval-augmented image quality scoring (C++ core)";

    auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    auto validation = py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<FeatureFormatError>(m, "FeatureFormatError", validation.ptr());
    py::register_exception<FileNotFoundError>(m, "FileNotFoundError", validation.ptr());
    py::register_exception<EmptyAnchorSetError>(m, "EmptyAnchorSetError", validation.ptr());
    py::register_exception<IoError>(m, "IoError", error.ptr());
    py::register_exception<TransportError>(m, "TransportError", error.ptr());
    py::register_exception<BackendError>(m, "BackendError", error.ptr());

    // ---- corpus

    py::class_<ImageRecord>(m, "ImageRecord")
        .def_readonly("id", &ImageRecord::id)
        .def_readonly("path", &ImageRecord::path)
        .def_readonly("dataset", &ImageRecord::dataset)
        .def_readonly("mos_raw", &ImageRecord::mos_raw)
        .def_readonly("mos_norm", &ImageRecord::mos_norm)
        .def("__repr__", [](const ImageRecord& r) { return "<ImageRecord " + r.id + ">"; });

    py::class_<DatasetManifest>(m, "DatasetManifest")
        .def_readonly("name", &DatasetManifest::name)
        .def_readonly("scale_min", &DatasetManifest::scale_min)
        .def_readonly("scale_max", &DatasetManifest::scale_max)
        .def_readonly("records", &DatasetManifest::records)
        .def("__len__", [](const DatasetManifest& d) { return d.records.size(); })
        .def("ids", [](const DatasetManifest& d) {
            std::vector<std::string> ids;
            for (const auto& r : d.records) ids.push_back(r.id);
            return ids;
        });

    m.def("normalize_mos", &normalize_mos, py::arg("mos_raw"), py::arg("scale_min"), py::arg("scale_max"));
    m.def("load_manifest", &load_manifest, py::arg("path"));
    m.def("save_manifest", &save_manifest, py::arg("manifest"), py::arg("path"));
    m.def(
        "make_manifest",
        [](std::string name, double lo, double hi, const std::vector<std::tuple<std::string, std::string, double>>& rows) {
            std::vector<ImageRecord> records;
            for (const auto& [id, path, mos] : rows) records.push_back({id, path, name, mos, 0.0});
            return make_manifest(name, lo, hi, std::move(records));
        },
        py::arg("name"), py::arg("scale_min"), py::arg("scale_max"), py::arg("rows"),
        "rows: (id, path, mos_raw) tuples");
    m.def(
        "split",
        [](const DatasetManifest& d, const std::string& ratio, std::uint64_t seed) {
            auto s = split(d, SplitSpec::parse_ratio(ratio, seed));
            return py::make_tuple(s.reference_ids, s.test_ids);
        },
        py::arg("manifest"), py::arg("ratio") = "1:9", py::arg("seed") = 0,
        "Returns (reference_ids, test_ids), each in manifest order.");
    m.def(
        "reference_count",
        [](std::size_t n, const std::string& ratio) { return reference_count(n, SplitSpec::parse_ratio(ratio)); },
        py::arg("total"), py::arg("ratio"));

    // ---- featstore

    py::class_<FeatureMatrix>(m, "FeatureMatrix")
        .def(py::init(&matrix_from_numpy), py::arg("ids"), py::arg("data"), py::arg("encoder_tag") = "")
        .def_property_readonly("rows", &FeatureMatrix::rows)
        .def_property_readonly("dim", &FeatureMatrix::dim)
        .def_property_readonly("ids", [](const FeatureMatrix& f) { return f.ids(); })
        .def_property_readonly("encoder_tag", &FeatureMatrix::encoder_tag)
        .def("to_numpy", &matrix_to_numpy)
        .def("row", [](const FeatureMatrix& f, const std::string& id) {
            auto r = f.row_of(id);
            return std::vector<float>(r.begin(), r.end());
        })
        .def("__len__", &FeatureMatrix::rows)
        .def("__eq__", [](const FeatureMatrix& a, const FeatureMatrix& b) { return a == b; });

    m.def("read_features", &read_features, py::arg("path"));
    m.def("write_features", &write_features, py::arg("matrix"), py::arg("path"));
    m.def("encode_features", [](const FeatureMatrix& f) { return py::bytes(encode_features(f)); });
    m.def("decode_features", [](const py::bytes& b) { return decode_features(std::string(b)); });
    m.def(
        "align", [](const FeatureMatrix& f, const DatasetManifest& d) { return align(f, d); }, py::arg("matrix"),
        py::arg("manifest"));

    // ---- retrieval

    py::class_<Neighbor>(m, "Neighbor")
        .def_readonly("id", &Neighbor::id)
        .def_readonly("distance", &Neighbor::distance)
        .def_readonly("mos", &Neighbor::mos)
        .def_readonly("rank", &Neighbor::rank)
        .def_readonly("row", &Neighbor::row);

    py::class_<Anchor>(m, "Anchor")
        .def_readonly("id", &Anchor::id)
        .def_readonly("mos", &Anchor::mos)
        .def_readonly("bin", &Anchor::bin)
        .def_readonly("rank", &Anchor::rank)
        .def_readonly("distance", &Anchor::distance)
        .def_property_readonly("level", [](const Anchor& a) { return std::string(level_word(a.mos)); })
        .def("__repr__", [](const Anchor& a) { return "<Anchor " + a.id + " bin=" + std::to_string(a.bin) + ">"; });

    py::class_<RetrievalIndex>(m, "RetrievalIndex")
        .def(py::init([](const FeatureMatrix& f, std::vector<double> mos, const std::string& metric) {
                 return RetrievalIndex(f, std::move(mos), parse_metric(metric));
             }),
             py::arg("features"), py::arg("mos"), py::arg("metric") = "l2")
        .def_static(
            "build",
            [](const FeatureMatrix& f, const DatasetManifest& refs, const std::string& metric) {
                return RetrievalIndex::build(f, refs, parse_metric(metric));
            },
            py::arg("features"), py::arg("references"), py::arg("metric") = "l2")
        .def_property_readonly("size", &RetrievalIndex::size)
        .def_property_readonly("dim", &RetrievalIndex::dim)
        .def(
            "knn",
            [](const RetrievalIndex& idx, const FloatArray& q, std::size_t k, unsigned workers) {
                return knn(idx, vector_from_numpy(q), k, workers);
            },
            py::arg("query"), py::arg("k"), py::arg("workers") = 1)
        .def(
            "retrieve",
            [](const RetrievalIndex& idx, const FloatArray& q, std::size_t k, const std::string& query_id,
               std::size_t max_anchors, unsigned workers) {
                return retrieve(idx, vector_from_numpy(q), k, query_id, max_anchors, workers).entries;
            },
            py::arg("query"), py::arg("k") = kDefaultK, py::arg("query_id") = "", py::arg("max_anchors") = kMaxAnchors,
            py::arg("workers") = 1);

    m.def("bin_of", &bin_of, py::arg("mos"));
    m.def("level_word", [](double mos) { return std::string(level_word(mos)); }, py::arg("mos"));

    // ---- prompts (serialized JSON text)

    m.def(
        "baseline_prompt",
        [](const DatasetManifest& d, const std::string& id) {
            return serialize(build_baseline_prompt(id, ImageCatalog(d)));
        },
        py::arg("catalog"), py::arg("image_id"));
    m.def(
        "rag_prompt",
        [](const DatasetManifest& d, const std::string& id, const std::vector<Anchor>& anchors,
           const std::string& order, const std::string& level) {
            AnchorSet set;
            set.query_id = id;
            set.entries = anchors;
            PromptOptions opts;
            opts.order = parse_anchor_order(order);
            opts.level = parse_level_format(level);
            return serialize(build_rag_prompt(set, id, ImageCatalog(d), opts));
        },
        py::arg("catalog"), py::arg("image_id"), py::arg("anchors"), py::arg("order") = "ascending",
        py::arg("level_format") = "word");

    // ---- scoring

    m.attr("CANDIDATE_WORDS") = std::vector<std::string>{"excellent", "good", "fair", "poor", "bad"};
    m.def(
        "softmax_closed_set", [](const std::vector<double>& z) { return table_to(softmax_closed_set(table_from(z))); },
        py::arg("logits"));
    m.def(
        "fuse_score",
        [](const std::vector<double>& p, std::optional<std::vector<double>> weights) {
            const QualityWeights w = weights ? QualityWeights(table_from(*weights)) : QualityWeights();
            return fuse_score(table_from(p), w).value;
        },
        py::arg("probabilities"), py::arg("weights") = py::none());
    m.def(
        "mock_logits",
        [](double mos, const std::string& kind, const std::string& id) {
            return table_to(mock_logits(mos, parse_kind(kind), id).logits);
        },
        py::arg("oracle_mos"), py::arg("kind"), py::arg("image_id"));
    m.def("id_phase", &id_phase, py::arg("image_id"));

    // ---- evalkit

    m.def(
        "srcc", [](const std::vector<double>& a, const std::vector<double>& b) { return srcc(a, b); }, py::arg("pred"),
        py::arg("gt"));
    m.def(
        "plcc", [](const std::vector<double>& a, const std::vector<double>& b) { return plcc(a, b); }, py::arg("pred"),
        py::arg("gt"));
    m.def(
        "plcc_logistic",
        [](const std::vector<double>& a, const std::vector<double>& b) { return plcc_logistic(a, b); },
        py::arg("pred"), py::arg("gt"));
    m.def(
        "run_experiment_json",
        [](const std::string& config_json, const std::string& base_dir) {
            ExperimentConfig c = ExperimentConfig::from_json(json::parse(config_json), base_dir);
            MetricReport r;
            {
                py::gil_scoped_release release;
                r = run_experiment(c);
            }
            return report_to_json(r).dump();
        },
        py::arg("config_json"), py::arg("base_dir") = "");
    m.def(
        "compare_json",
        [](const std::string& report_json) { return deltas_to_json(compare(report_from_json(json::parse(report_json)))).dump(); },
        py::arg("report_json"));
    m.def(
        "report_csv", [](const std::string& report_json) { return report_to_csv(report_from_json(json::parse(report_json))); },
        py::arg("report_json"));
}
