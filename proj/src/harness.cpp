#include "llmcipher/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <map>
#include <set>
#include <unordered_map>

#include "llmcipher/errors.hpp"
#include "llmcipher/io.hpp"

namespace llmcipher {

using nlohmann::json;

// Metrics ----------------------------------------------------------------------

ConfusionMatrix ConfusionMatrix::zeros(std::vector<std::string> class_names) {
    ConfusionMatrix m;
    const auto n = class_names.size();
    m.class_names = std::move(class_names);
    m.counts.assign(n, std::vector<std::uint64_t>(n, 0));
    return m;
}

std::size_t ConfusionMatrix::index_of(const std::string& name) const {
    const auto it = std::find(class_names.begin(), class_names.end(), name);
    if (it == class_names.end()) throw DataError("unknown label '" + name + "'");
    return static_cast<std::size_t>(it - class_names.begin());
}

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t t = 0;
    for (const auto& row : counts)
        for (const auto c : row) t += c;
    return t;
}

std::uint64_t ConfusionMatrix::trace() const {
    std::uint64_t t = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) t += counts[i][i];
    return t;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t i) const {
    std::uint64_t t = 0;
    for (const auto c : counts[i]) t += c;
    return t;
}

std::uint64_t ConfusionMatrix::column_sum(std::size_t j) const {
    std::uint64_t t = 0;
    for (const auto& row : counts) t += row[j];
    return t;
}

namespace {

std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

MetricsReport metrics_from_confusion(const ConfusionMatrix& confusion) {
    const std::size_t n = confusion.class_names.size();
    if (confusion.counts.size() != n) throw DimensionError("confusion matrix is not square");
    for (const auto& row : confusion.counts)
        if (row.size() != n) throw DimensionError("confusion matrix is not square");
    MetricsReport report;
    report.confusion = confusion;
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t tp = confusion.counts[i][i];
        const std::uint64_t support = confusion.row_sum(i);
        const std::uint64_t predicted = confusion.column_sum(i);
        ClassMetrics m;
        m.name = confusion.class_names[i];
        m.support = support;
        m.precision = ratio(tp, predicted);
        m.recall = ratio(tp, support);
        // 2TP / (2TP + FP + FN) == 2TP / (predicted + support)
        m.f1 = ratio(2 * tp, predicted + support);
        report.per_class.push_back(std::move(m));
    }
    report.accuracy = ratio(confusion.trace(), confusion.total());
    return report;
}

MetricsReport confusion_and_metrics(std::span<const std::string> preds, std::span<const std::string> truths,
                                    const std::vector<std::string>& class_names) {
    if (preds.size() != truths.size())
        throw DimensionError("confusion_and_metrics: " + std::to_string(preds.size()) + " predictions for " +
                             std::to_string(truths.size()) + " truths");
    if (preds.empty()) throw DataError("confusion_and_metrics: no samples");
    auto confusion = ConfusionMatrix::zeros(class_names);
    for (std::size_t i = 0; i < preds.size(); ++i)
        ++confusion.counts[confusion.index_of(truths[i])][confusion.index_of(preds[i])];
    return metrics_from_confusion(confusion);
}

std::optional<double> percent1(std::optional<double> r) {
    if (!r) return std::nullopt;
    return std::round(*r * 1000.0) / 10.0;
}

std::string collapse_to_binary(const std::string& label) {
    return label == kHumanLabel ? std::string(kHumanLabel) : std::string(kMachineLabel);
}

namespace {

struct BinaryCounts {
    std::uint64_t tp = 0, fp = 0, fn = 0, positives = 0;
};

BinaryCounts machine_counts(std::span<const std::string> preds, std::span<const std::string> truths) {
    if (preds.size() != truths.size()) throw DimensionError("prediction and truth counts differ");
    BinaryCounts c;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const bool truth_machine = collapse_to_binary(truths[i]) == kMachineLabel;
        const bool pred_machine = collapse_to_binary(preds[i]) == kMachineLabel;
        c.positives += truth_machine;
        c.tp += truth_machine && pred_machine;
        c.fp += !truth_machine && pred_machine;
        c.fn += truth_machine && !pred_machine;
    }
    return c;
}

}  // namespace

std::optional<double> f1_machine(std::span<const std::string> preds, std::span<const std::string> truths) {
    const auto c = machine_counts(preds, truths);
    if (c.positives == 0) return std::nullopt;
    return 100.0 * static_cast<double>(2 * c.tp) / static_cast<double>(2 * c.tp + c.fp + c.fn);
}

std::optional<double> machine_recall(std::span<const std::string> preds, std::span<const std::string> truths) {
    const auto c = machine_counts(preds, truths);
    if (c.positives == 0) return std::nullopt;
    return 100.0 * static_cast<double>(c.tp) / static_cast<double>(c.positives);
}

std::optional<double> delta_recall(double recall_base, double recall_adv) {
    if (recall_base == 0.0) return std::nullopt;
    return 100.0 * (recall_adv - recall_base) / recall_base;
}

namespace {

json optional_json(std::optional<double> v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json metrics_to_json(const MetricsReport& report) {
    json per_class = json::object();
    for (const auto& m : report.per_class) {
        per_class[m.name] = {
            {"precision", optional_json(percent1(m.precision))},
            {"recall", optional_json(percent1(m.recall))},
            {"f1", optional_json(percent1(m.f1))},
            {"precision_ratio", optional_json(m.precision)},
            {"recall_ratio", optional_json(m.recall)},
            {"f1_ratio", optional_json(m.f1)},
            {"support", m.support},
        };
    }
    return {
        {"confusion", {{"class_names", report.confusion.class_names}, {"counts", report.confusion.counts}}},
        {"per_class", per_class},
        {"accuracy", optional_json(percent1(report.accuracy))},
        {"accuracy_ratio", optional_json(report.accuracy)},
    };
}

// Classifiers --------------------------------------------------------------------

const char* to_string(ClassifierKind k) {
    switch (k) {
        case ClassifierKind::mlp_multiclass: return "mlp_multiclass";
        case ClassifierKind::mlp_binary: return "mlp_binary";
        case ClassifierKind::knn: return "knn";
        case ClassifierKind::cknn: return "cknn";
    }
    return "?";
}

const char* to_string(ProtocolKind k) {
    switch (k) {
        case ProtocolKind::attribution: return "attribution";
        case ProtocolKind::cross_domain: return "cross_domain";
        case ProtocolKind::cross_generator: return "cross_generator";
        case ProtocolKind::transfer: return "transfer";
        case ProtocolKind::adversarial: return "adversarial";
    }
    return "?";
}

ClassifierKind classifier_kind_from_string(const std::string& s) {
    for (const auto k : {ClassifierKind::mlp_multiclass, ClassifierKind::mlp_binary, ClassifierKind::knn,
                         ClassifierKind::cknn})
        if (s == to_string(k)) return k;
    throw ConfigError("unknown classifier '" + s + "' (expected mlp_multiclass, mlp_binary, knn or cknn)");
}

ProtocolKind protocol_kind_from_string(const std::string& s) {
    for (const auto k : {ProtocolKind::attribution, ProtocolKind::cross_domain, ProtocolKind::cross_generator,
                         ProtocolKind::transfer, ProtocolKind::adversarial})
        if (s == to_string(k)) return k;
    throw ConfigError("unknown protocol '" + s +
                      "' (expected attribution, cross_domain, cross_generator, transfer or adversarial)");
}

json ClassifierOptions::to_json() const {
    return {{"mlp", mlp.to_json()},
            {"mlp_dims", mlp_dims},
            {"contrastive", contrastive.to_json()},
            {"projection_dims", projection_dims},
            {"k", k}};
}

std::vector<std::string> Classifier::predict_all(const EmbeddingSet& set) const {
    std::vector<std::string> out;
    out.reserve(set.size());
    for (const auto& r : set.records()) out.push_back(predict(r.vector));
    return out;
}

std::string MlpClassifier::predict(std::span<const float> x) const {
    return model_.class_names[mlp_predict(model_, x)];
}

std::vector<std::string> MlpClassifier::predict_all(const EmbeddingSet& set) const {
    std::vector<std::vector<float>> xs;
    xs.reserve(set.size());
    for (const auto& r : set.records()) xs.push_back(r.vector);
    std::vector<std::string> out;
    for (const auto c : mlp_predict_batch(model_, xs)) out.push_back(model_.class_names[c]);
    return out;
}

bool MlpClassifier::binary_output() const {
    return model_.class_names == std::vector<std::string>{kHumanLabel, kMachineLabel};
}

std::string KnnClassifier::predict(std::span<const float> x) const { return model_.predict(x).label; }

std::string ContrastiveKnnClassifier::predict(std::span<const float> x) const {
    return project_and_classify(projection_, knn_, x).label;
}

std::vector<std::string> ContrastiveKnnClassifier::predict_all(const EmbeddingSet& set) const {
    std::vector<std::vector<float>> xs;
    xs.reserve(set.size());
    for (const auto& r : set.records()) xs.push_back(r.vector);
    std::vector<std::string> out;
    for (const auto& z : projection_.project_all(xs)) out.push_back(knn_.predict(z).label);
    return out;
}

namespace {

std::vector<Example> to_examples(const EmbeddingSet& set, const std::vector<std::string>& class_names, bool collapse) {
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < class_names.size(); ++i) index[class_names[i]] = i;
    std::vector<Example> out;
    out.reserve(set.size());
    for (const auto& r : set.records()) {
        const auto label = collapse ? collapse_to_binary(r.label) : r.label;
        const auto it = index.find(label);
        if (it == index.end()) continue;  // validation labels unseen in training cannot be scored
        out.push_back({r.vector, it->second});
    }
    return out;
}

MlpTrainResult train_labelled_mlp(const EmbeddingSet& train, const EmbeddingSet& val, TrainConfig config,
                                  const std::vector<std::size_t>& dims, std::vector<std::string> class_names,
                                  bool collapse) {
    if (class_names.size() < 2)
        throw ProtocolError("classifier needs at least two classes in the training data, got " +
                            std::to_string(class_names.size()));
    config.class_count = class_names.size();
    auto train_examples = to_examples(train, class_names, collapse);
    auto val_examples = to_examples(val, class_names, collapse);
    if (val_examples.empty()) val_examples = train_examples;
    const bool nonstandard = !dims.empty();
    auto result = train_mlp(train_examples, val_examples, config, dims, nonstandard);
    result.model.class_names = std::move(class_names);
    return result;
}

}  // namespace

MlpTrainResult train_multiclass_mlp(const EmbeddingSet& train, const EmbeddingSet& val, TrainConfig config,
                                    const std::vector<std::size_t>& dims) {
    return train_labelled_mlp(train, val, config, dims, train.labels(), false);
}

MlpTrainResult train_binary_mlp(const EmbeddingSet& train, const EmbeddingSet& val, TrainConfig config,
                                const std::vector<std::size_t>& dims) {
    return train_labelled_mlp(train, val, config, dims, {kHumanLabel, kMachineLabel}, true);
}

std::unique_ptr<Classifier> train_classifier(ClassifierKind kind, const EmbeddingSet& train, const EmbeddingSet& val,
                                             const ClassifierOptions& options) {
    if (train.empty()) throw ProtocolError("training set is empty");
    switch (kind) {
        case ClassifierKind::mlp_multiclass:
            return std::make_unique<MlpClassifier>(
                train_multiclass_mlp(train, val, options.mlp, options.mlp_dims).model);
        case ClassifierKind::mlp_binary:
            return std::make_unique<MlpClassifier>(train_binary_mlp(train, val, options.mlp, options.mlp_dims).model);
        case ClassifierKind::knn:
            return std::make_unique<KnnClassifier>(knn_fit(train, options.k));
        case ClassifierKind::cknn: {
            auto trained = train_projection(train, val, options.contrastive, options.projection_dims,
                                            !options.projection_dims.empty() &&
                                                options.projection_dims.back() != kProjectionWidth);
            auto projected = fit_projected_knn(trained.projection, train, options.k);
            return std::make_unique<ContrastiveKnnClassifier>(std::move(trained.projection), std::move(projected));
        }
    }
    throw ConfigError("unknown classifier kind");
}

// Protocols --------------------------------------------------------------------

void ProtocolSpec::validate() const {
    const bool cross = kind == ProtocolKind::cross_domain || kind == ProtocolKind::cross_generator;
    if (cross && (!held_out || held_out->empty()))
        throw ConfigError(std::string(to_string(kind)) + " requires a held-out value");
    if (!cross && held_out) throw ConfigError(std::string(to_string(kind)) + " does not take a held-out value");
    if (kind == ProtocolKind::cross_generator && held_out && *held_out == kHumanLabel)
        throw ConfigError("cross_generator cannot hold out the human class");
    if (kind == ProtocolKind::transfer && !test_set) throw ConfigError("transfer requires a separate test set");
    if (kind == ProtocolKind::adversarial && !perturbed_set)
        throw ConfigError("adversarial requires a perturbed test set");
    if (kind != ProtocolKind::adversarial && perturbed_set)
        throw ConfigError("only the adversarial protocol takes a perturbed set");
    if (train_set.empty()) throw ConfigError("protocol requires a training set");
}

json ProtocolSpec::to_json() const {
    return {{"kind", to_string(kind)},
            {"classifier", to_string(classifier)},
            {"held_out", held_out ? json(*held_out) : json(nullptr)},
            {"train_set", train_set.string()},
            {"test_set", test_set ? json(test_set->string()) : json(nullptr)},
            {"perturbed_set", perturbed_set ? json(perturbed_set->string()) : json(nullptr)},
            {"seed", seed},
            {"options", options.to_json()}};
}

ProtocolData prepare_protocol_data(const ProtocolSpec& spec) {
    spec.validate();
    const EmbeddingSet pool = load_embeddings(spec.train_set);
    std::optional<EmbeddingSet> external_test;
    if (spec.test_set) external_test = load_embeddings(*spec.test_set);
    if (external_test && !external_test->empty() && !pool.empty() && external_test->dim() != pool.dim())
        throw DimensionError("train and test embeddings have different widths");

    std::function<bool(const EmbeddingRecord&)> held_out_member;
    if (spec.kind == ProtocolKind::cross_domain)
        held_out_member = [h = *spec.held_out](const EmbeddingRecord& r) { return r.domain == h; };
    else if (spec.kind == ProtocolKind::cross_generator)
        held_out_member = [h = *spec.held_out](const EmbeddingRecord& r) { return r.label == h; };

    if (held_out_member) {
        const auto& source = external_test ? *external_test : pool;
        if (std::none_of(source.records().begin(), source.records().end(), held_out_member))
            throw ProtocolError("held-out value '" + *spec.held_out + "' does not occur in the test data");
    }

    SplitSpec split;
    split.seed = spec.seed;
    split.stratify_label = true;
    split.stratify_domain = !external_test;
    split.fractions = external_test ? std::array<double, 3>{8.0 / 9.0, 1.0 / 9.0, 0.0}
                                    : std::array<double, 3>{0.8, 0.1, 0.1};
    if (held_out_member) {
        const bool by_domain = spec.kind == ProtocolKind::cross_domain;
        split.exclude_from_train = [h = *spec.held_out, by_domain](const std::string& label, const std::string& domain) {
            return by_domain ? domain == h : label == h;
        };
    }
    const auto assignment = make_split(pool, split);

    ProtocolData data;
    data.train = pool.subset(assignment.ids(Partition::train));
    data.val = pool.subset(assignment.ids(Partition::val));
    if (external_test) {
        data.test = *external_test;
    } else {
        auto ids = assignment.ids(Partition::test);
        const auto excluded = assignment.ids(Partition::excluded);
        ids.insert(ids.end(), excluded.begin(), excluded.end());
        data.test = pool.subset(ids);
    }

    if (held_out_member) {
        auto not_held_out = [&](const EmbeddingRecord& r) { return !held_out_member(r); };
        data.train = data.train.filter(not_held_out);
        data.val = data.val.filter(not_held_out);
        if (spec.kind == ProtocolKind::cross_domain)
            data.test = data.test.filter(held_out_member);
        else
            data.test = data.test.filter([&](const EmbeddingRecord& r) { return held_out_member(r) || r.is_human(); });
    }
    if (data.train.empty()) throw ProtocolError("training set is empty after exclusions");
    if (data.test.empty()) throw ProtocolError("test set is empty");

    if (spec.kind == ProtocolKind::adversarial) {
        const EmbeddingSet perturbed = load_embeddings(*spec.perturbed_set);
        std::unordered_map<std::string, const EmbeddingRecord*> by_id;
        for (const auto& r : perturbed.records()) by_id[r.id] = &r;
        std::vector<EmbeddingRecord> merged;
        for (const auto& r : data.test.records()) {
            const auto it = by_id.find(r.id);
            if (it == by_id.end()) {
                if (!r.is_human())
                    throw ProtocolError("machine test record '" + r.id + "' has no perturbed counterpart");
                merged.push_back(r);
                continue;
            }
            if (it->second->label != r.label)
                throw DataError("perturbed record '" + r.id + "' changes the label");
            EmbeddingRecord copy = *it->second;
            copy.encoder = r.encoder;
            merged.push_back(std::move(copy));
        }
        data.perturbed = EmbeddingSet::from_records(std::move(merged));
    }
    return data;
}

namespace {

std::vector<std::string> truths_of(const EmbeddingSet& set, bool collapse) {
    std::vector<std::string> out;
    out.reserve(set.size());
    for (const auto& r : set.records()) out.push_back(collapse ? collapse_to_binary(r.label) : r.label);
    return out;
}

std::vector<std::string> collapse_all(const std::vector<std::string>& labels) {
    std::vector<std::string> out;
    out.reserve(labels.size());
    for (const auto& l : labels) out.push_back(collapse_to_binary(l));
    return out;
}

std::vector<std::string> class_space(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::set<std::string> names(a.begin(), a.end());
    names.insert(b.begin(), b.end());
    return {names.begin(), names.end()};
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

json evaluate_protocol(const ProtocolSpec& spec, const ProtocolData& data, const Classifier& classifier) {
    json report = json::object();
    report["format"] = kReportFormat;
    report["spec"] = spec.to_json();
    report["seed"] = spec.seed;
    report["counts"] = {{"train", data.train.size()}, {"val", data.val.size()}, {"test", data.test.size()}};
    report["delta_recall"] = nullptr;

    const auto raw_preds = classifier.predict_all(data.test);
    const auto binary_preds = collapse_all(raw_preds);
    const auto binary_truths = truths_of(data.test, true);

    if (spec.kind == ProtocolKind::attribution) {
        const bool binary = classifier.binary_output();
        const auto truths = truths_of(data.test, binary);
        const auto& preds = binary ? binary_preds : raw_preds;
        report.update(metrics_to_json(confusion_and_metrics(preds, truths, class_space(preds, truths))));
    } else {
        report.update(metrics_to_json(
            confusion_and_metrics(binary_preds, binary_truths, {kHumanLabel, kMachineLabel})));
    }
    const auto f1 = f1_machine(binary_preds, binary_truths);
    report["f1_machine"] = optional_json(percent1(f1 ? std::optional<double>(*f1 / 100.0) : std::nullopt));
    report["f1_machine_raw"] = optional_json(f1);

    if (spec.kind == ProtocolKind::adversarial) {
        if (!data.perturbed) throw ProtocolError("adversarial evaluation needs perturbed data");
        const auto adv_preds = collapse_all(classifier.predict_all(*data.perturbed));
        const auto adv_truths = truths_of(*data.perturbed, true);
        const auto base = machine_recall(binary_preds, binary_truths);
        const auto adv = machine_recall(adv_preds, adv_truths);
        if (!base || !adv) throw ProtocolError("adversarial test data holds no machine samples");
        const auto adv_f1 = f1_machine(adv_preds, adv_truths);
        report["recall_base"] = *base;
        report["recall_adv"] = *adv;
        report["delta_recall"] = optional_json(delta_recall(*base, *adv));
        report["f1_machine_base"] = report["f1_machine"];
        report["f1_machine"] =
            optional_json(percent1(adv_f1 ? std::optional<double>(*adv_f1 / 100.0) : std::nullopt));
        report["f1_machine_raw"] = optional_json(adv_f1);
        report["adversarial"] = metrics_to_json(
            confusion_and_metrics(adv_preds, adv_truths, {kHumanLabel, kMachineLabel}));
    }
    report["timestamps"] = nullptr;
    return report;
}

json run_protocol(const ProtocolSpec& spec) {
    const std::string started = spec.record_timestamps ? utc_now() : std::string();
    const auto data = prepare_protocol_data(spec);
    ClassifierOptions options = spec.options;
    options.mlp.seed = spec.seed;
    options.contrastive.seed = spec.seed;
    const auto classifier = train_classifier(spec.classifier, data.train, data.val, options);
    json report = evaluate_protocol(spec, data, *classifier);
    if (spec.record_timestamps) report["timestamps"] = {{"started_utc", started}, {"finished_utc", utc_now()}};
    return report;
}

// Feature export ---------------------------------------------------------------

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (const char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

}  // namespace

std::string features_csv(const MlpModel& model, const EmbeddingSet& set) {
    if (!model.has_standard_shape())
        throw UnsupportedError("feature export requires six layers with a 256-wide penultimate layer");
    std::string out = "id,label,domain";
    for (std::size_t i = 0; i < kPenultimateWidth; ++i) out += ",f" + std::to_string(i);
    out += "\r\n";
    char buf[32];
    for (const auto& r : set.records()) {
        out += csv_field(r.id) + "," + csv_field(r.label) + "," + csv_field(r.domain);
        for (const float v : penultimate_features(model, r.vector)) {
            std::snprintf(buf, sizeof buf, ",%.9g", static_cast<double>(v));
            out += buf;
        }
        out += "\r\n";
    }
    return out;
}

void export_features(const MlpModel& model, const EmbeddingSet& set, const std::filesystem::path& path) {
    write_file_atomic(path, features_csv(model, set));
}

}  // namespace llmcipher
