#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "llmcipher/adversarial.hpp"
#include "llmcipher/cli.hpp"
#include "llmcipher/contrastive.hpp"
#include "llmcipher/embedding_store.hpp"
#include "llmcipher/errors.hpp"
#include "llmcipher/harness.hpp"
#include "llmcipher/knn.hpp"
#include "llmcipher/mlp.hpp"

namespace py = pybind11;
using namespace llmcipher;

namespace {

py::dict metrics_dict(const MetricsReport& report) {
    py::dict per_class;
    for (const auto& c : report.per_class) {
        py::dict row;
        row["precision"] = percent1(c.precision);
        row["recall"] = percent1(c.recall);
        row["f1"] = percent1(c.f1);
        row["support"] = c.support;
        per_class[py::str(c.name)] = row;
    }
    py::dict out;
    out["per_class"] = per_class;
    out["accuracy"] = percent1(report.accuracy);
    return out;
}

py::dict split_dict(const SplitAssignment& a) {
    py::dict assignment;
    for (const auto& [id, p] : a.assignment) assignment[py::str(id)] = to_string(p);
    py::dict out;
    out["assignment"] = assignment;
    out["warnings"] = a.warnings;
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Embedding-based detection and attribution of machine-generated text.";

    auto base = py::register_exception<Error>(m, "LlmcipherError", PyExc_ValueError);
    py::register_exception<ParseError>(m, "ParseError", base);
    py::register_exception<FormatError>(m, "FormatError", base);
    py::register_exception<DataError>(m, "DataError", base);
    py::register_exception<DimensionError>(m, "DimensionError", base);
    py::register_exception<ConfigError>(m, "ConfigError", base);
    py::register_exception<DomainError>(m, "DomainError", base);
    py::register_exception<NumericError>(m, "NumericError", base);
    py::register_exception<SamplingError>(m, "SamplingError", base);
    py::register_exception<InputError>(m, "InputError", base);
    py::register_exception<ProtocolError>(m, "ProtocolError", base);
    py::register_exception<UnsupportedError>(m, "UnsupportedError", base);
    py::register_exception<IoError>(m, "IoError", base);

    py::class_<EmbeddingRecord>(m, "EmbeddingRecord")
        .def(py::init([](std::string id, std::string label, std::string domain, std::vector<float> vector,
                         std::string encoder, std::optional<std::string> pair_id) {
                 return EmbeddingRecord{std::move(id), std::move(label),   std::move(domain),
                                        std::move(pair_id), std::move(encoder), std::move(vector)};
             }),
             py::arg("id"), py::arg("label"), py::arg("domain"), py::arg("vector"), py::arg("encoder") = "unknown",
             py::arg("pair_id") = py::none())
        .def_readwrite("id", &EmbeddingRecord::id)
        .def_readwrite("label", &EmbeddingRecord::label)
        .def_readwrite("domain", &EmbeddingRecord::domain)
        .def_readwrite("pair_id", &EmbeddingRecord::pair_id)
        .def_readwrite("encoder", &EmbeddingRecord::encoder)
        .def_readwrite("vector", &EmbeddingRecord::vector)
        .def("is_human", &EmbeddingRecord::is_human)
        .def("__repr__", [](const EmbeddingRecord& r) {
            return "<EmbeddingRecord id=" + r.id + " label=" + r.label + " dim=" + std::to_string(r.vector.size()) +
                   ">";
        });

    py::class_<EmbeddingSet>(m, "EmbeddingSet")
        .def(py::init(&EmbeddingSet::from_records), py::arg("records"))
        .def_property_readonly("dim", &EmbeddingSet::dim)
        .def_property_readonly("encoder", &EmbeddingSet::encoder)
        .def_property_readonly("records", &EmbeddingSet::records)
        .def("labels", &EmbeddingSet::labels)
        .def("domains", &EmbeddingSet::domains)
        .def("subset", &EmbeddingSet::subset)
        .def("__len__", &EmbeddingSet::size)
        .def("__getitem__", [](const EmbeddingSet& s, std::size_t i) {
            if (i >= s.size()) throw py::index_error();
            return s[i];
        });

    m.def("load_embeddings", &load_embeddings, py::arg("path"));
    m.def("save_embeddings", &save_embeddings, py::arg("set"), py::arg("path"));
    m.def("parse_embedding_line", &parse_embedding_line, py::arg("line"), py::arg("line_number") = 1);
    m.def("format_embedding_line", &format_embedding_line, py::arg("record"));
    m.def(
        "make_split",
        [](const EmbeddingSet& set, std::uint64_t seed, std::array<double, 3> fractions, bool stratify_label,
           bool stratify_domain, bool keep_pairs_together) {
            SplitSpec spec;
            spec.seed = seed;
            spec.fractions = fractions;
            spec.stratify_label = stratify_label;
            spec.stratify_domain = stratify_domain;
            spec.keep_pairs_together = keep_pairs_together;
            return split_dict(make_split(set, spec));
        },
        py::arg("set"), py::arg("seed") = 42, py::arg("fractions") = std::array<double, 3>{0.8, 0.1, 0.1},
        py::arg("stratify_label") = true, py::arg("stratify_domain") = false, py::arg("keep_pairs_together") = true);

    py::class_<Neighbor>(m, "Neighbor")
        .def_readonly("id", &Neighbor::id)
        .def_readonly("label", &Neighbor::label)
        .def_readonly("distance", &Neighbor::distance);
    py::class_<KnnPrediction>(m, "KnnPrediction")
        .def_readonly("label", &KnnPrediction::label)
        .def_readonly("neighbors", &KnnPrediction::neighbors);
    py::class_<KnnModel>(m, "KnnModel")
        .def_property_readonly("k", &KnnModel::k)
        .def_property_readonly("dim", &KnnModel::dim)
        .def("predict", [](const KnnModel& model, const std::vector<float>& q) { return model.predict(q); });
    m.def("knn_fit", py::overload_cast<const EmbeddingSet&, std::size_t>(&knn_fit), py::arg("train"),
          py::arg("k") = 5);
    m.def("save_knn", &save_knn, py::arg("model"), py::arg("path"));
    m.def("load_knn", &load_knn, py::arg("path"));

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("learning_rate", &TrainConfig::learning_rate)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("seed", &TrainConfig::seed);
    py::class_<MlpModel>(m, "MlpModel")
        .def_property_readonly("layer_dims", &MlpModel::layer_dims)
        .def_readonly("class_names", &MlpModel::class_names)
        .def_readonly("seed", &MlpModel::seed)
        .def("predict",
             [](const MlpModel& model, const std::vector<float>& x) { return model.class_names[mlp_predict(model, x)]; })
        .def("probabilities",
             [](const MlpModel& model, const std::vector<float>& x) { return softmax(mlp_forward(model, x).logits); })
        .def("penultimate_features",
             [](const MlpModel& model, const std::vector<float>& x) { return penultimate_features(model, x); });
    m.def("mlp_init", &mlp_init, py::arg("layer_dims"), py::arg("seed") = 42, py::arg("allow_nonstandard") = false);
    m.def(
        "train_mlp",
        [](const EmbeddingSet& train, const EmbeddingSet& val, const TrainConfig& config, bool binary,
           const std::vector<std::size_t>& layer_dims) {
            auto result = binary ? train_binary_mlp(train, val, config, layer_dims)
                                 : train_multiclass_mlp(train, val, config, layer_dims);
            return py::make_tuple(result.model, result.log.to_json().dump());
        },
        py::arg("train"), py::arg("val"), py::arg("config") = TrainConfig{}, py::arg("binary") = false,
        py::arg("layer_dims") = std::vector<std::size_t>{});
    m.def("save_mlp", &save_mlp, py::arg("model"), py::arg("path"));
    m.def("load_mlp", &load_mlp, py::arg("path"));
    m.def("features_csv", &features_csv, py::arg("model"), py::arg("set"));

    py::class_<ContrastiveConfig>(m, "ContrastiveConfig")
        .def(py::init<>())
        .def_readwrite("margin", &ContrastiveConfig::margin)
        .def_readwrite("epochs", &ContrastiveConfig::epochs)
        .def_readwrite("learning_rate", &ContrastiveConfig::learning_rate)
        .def_readwrite("batch_size", &ContrastiveConfig::batch_size)
        .def_readwrite("seed", &ContrastiveConfig::seed)
        .def_property(
            "granularity", [](const ContrastiveConfig& c) { return std::string(to_string(c.granularity)); },
            [](ContrastiveConfig& c, const std::string& s) { c.granularity = granularity_from_string(s); });
    py::class_<ProjectionNetwork>(m, "ProjectionNetwork")
        .def_property_readonly("layer_dims", [](const ProjectionNetwork& p) { return p.network.dims(); })
        .def_readonly("margin", &ProjectionNetwork::margin)
        .def("project", [](const ProjectionNetwork& p, const std::vector<float>& x) { return p.project(x); });
    m.def(
        "train_projection",
        [](const EmbeddingSet& train, const EmbeddingSet& val, const ContrastiveConfig& config,
           std::vector<std::size_t> layer_dims, bool allow_nonstandard) {
            auto result = train_projection(train, val, config, std::move(layer_dims), allow_nonstandard);
            return py::make_tuple(result.projection, result.log.to_json().dump());
        },
        py::arg("train"), py::arg("val"), py::arg("config") = ContrastiveConfig{},
        py::arg("layer_dims") = std::vector<std::size_t>{}, py::arg("allow_nonstandard") = false);
    m.def("fit_projected_knn", &fit_projected_knn, py::arg("projection"), py::arg("train"), py::arg("k") = 5);
    m.def("save_projection", &save_projection, py::arg("projection"), py::arg("path"));
    m.def("load_projection", &load_projection, py::arg("path"));
    m.def("pair_label", &pair_label);
    m.def(
        "triplet_loss",
        [](const std::vector<float>& a, const std::vector<float>& p, const std::vector<float>& n, double margin) {
            return triplet_loss(a, p, n, margin);
        },
        py::arg("anchor"), py::arg("positive"), py::arg("negative"), py::arg("margin") = 1.0);

    m.def(
        "metrics_from_confusion",
        [](std::vector<std::string> class_names, std::vector<std::vector<std::uint64_t>> counts) {
            ConfusionMatrix c{std::move(class_names), std::move(counts)};
            return metrics_dict(metrics_from_confusion(c));
        },
        py::arg("class_names"), py::arg("counts"));
    m.def(
        "f1_machine",
        [](const std::vector<std::string>& preds, const std::vector<std::string>& truths) {
            return f1_machine(preds, truths);
        },
        py::arg("preds"), py::arg("truths"));
    m.def("delta_recall", &delta_recall, py::arg("recall_base"), py::arg("recall_adv"));

    m.def(
        "perturb_text",
        [](const std::string& text, const std::string& corpus, const std::string& synonym_table,
           double low_prob_threshold, double synonym_similarity_threshold, std::size_t max_word_perturbations,
           double sentence_similarity_floor, bool pos_check) {
            PerturbationConfig config{low_prob_threshold, synonym_similarity_threshold, max_word_perturbations,
                                      sentence_similarity_floor, pos_check};
            config.validate();
            const auto oracle = NgramConfidenceOracle::fit(corpus);
            const auto synonyms = EmbeddingTableSynonyms::parse(synonym_table);
            return perturbation_to_json("", perturb_text(text, config, oracle, synonyms)).dump();
        },
        py::arg("text"), py::arg("corpus"), py::arg("synonym_table"), py::arg("low_prob_threshold") = 0.01,
        py::arg("synonym_similarity_threshold") = 0.7, py::arg("max_word_perturbations") = 10,
        py::arg("sentence_similarity_floor") = 0.8, py::arg("pos_check") = true);

    m.def(
        "cli_run",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            int code = 0;
            {
                py::gil_scoped_release release;
                code = cli::run(args, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"));
}
