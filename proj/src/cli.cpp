#include "llmcipher/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "llmcipher/adversarial.hpp"
#include "llmcipher/contrastive.hpp"
#include "llmcipher/embedding_store.hpp"
#include "llmcipher/errors.hpp"
#include "llmcipher/harness.hpp"
#include "llmcipher/io.hpp"
#include "llmcipher/knn.hpp"
#include "llmcipher/mlp.hpp"

namespace llmcipher::cli {

using nlohmann::json;

namespace {

constexpr std::uint64_t kDefaultSeed = 42;
constexpr const char* kSplitFormat = "llmcipher-split-v1";

const std::map<std::string, std::set<std::string>>& config_schema() {
    static const std::map<std::string, std::set<std::string>> schema = {
        {"seed", {}},
        {"paths",
         {"train", "val", "test", "perturbed", "in", "out", "model", "knn", "knn_out", "split", "corpus", "synonyms",
          "log"}},
        {"train", {"epochs", "learning_rate", "batch_size", "layer_dims"}},
        {"contrastive", {"margin", "epochs", "learning_rate", "batch_size", "class_granularity", "layer_dims"}},
        {"perturbation",
         {"low_prob_threshold", "synonym_similarity_threshold", "max_word_perturbations", "sentence_similarity_floor",
          "pos_check", "ngram_lambda", "max_candidates"}},
        {"split", {"fractions", "stratify", "keep_pairs_together"}},
        {"knn", {"k"}},
    };
    return schema;
}

json load_config(const std::optional<std::string>& flag) {
    std::optional<std::string> path = flag;
    if (!path) {
        if (const char* env = std::getenv("LLMCIPHER_CONFIG"); env != nullptr && *env != '\0') path = env;
    }
    if (!path) return json::object();
    json config;
    try {
        config = json::parse(read_file(*path));
    } catch (const json::parse_error& e) {
        throw FormatError("config " + *path + " is not valid JSON: " + e.what());
    }
    if (!config.is_object()) throw ConfigError("config " + *path + " must be a JSON object");
    const auto& schema = config_schema();
    for (const auto& [key, value] : config.items()) {
        const auto it = schema.find(key);
        if (it == schema.end()) throw ConfigError("unknown config key '" + key + "'");
        if (it->second.empty()) continue;
        if (!value.is_object()) throw ConfigError("config key '" + key + "' must be an object");
        for (const auto& [inner, _] : value.items())
            if (!it->second.contains(inner)) throw ConfigError("unknown config key '" + key + "." + inner + "'");
    }
    return config;
}

/// Flag value when given, else `config[section][key]`, else nullopt.
template <typename T>
std::optional<T> pick(const std::optional<T>& flag, const json& config, const char* section, const char* key) {
    if (flag) return flag;
    if (config.contains(section) && config[section].contains(key)) {
        try {
            return config[section][key].get<T>();
        } catch (const json::exception&) {
            throw ConfigError(std::string("config key '") + section + "." + key + "' has the wrong type");
        }
    }
    return std::nullopt;
}

std::vector<std::size_t> parse_dims(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const long long v = std::stoll(item, &used);
            if (used != item.size() || v <= 0) throw std::invalid_argument(item);
            out.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            throw ConfigError("invalid layer width '" + item + "'");
        }
    }
    return out;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

/// Line-delimited JSON event on the error stream.
void log_event(std::ostream& err, const std::string& event, json fields = json::object()) {
    fields["event"] = event;
    err << fields.dump() << '\n';
}

struct Common {
    std::optional<std::string> config_path;
    std::optional<std::uint64_t> seed;
    json config = json::object();

    std::uint64_t effective_seed() const {
        if (seed) return *seed;
        if (config.contains("seed")) {
            if (!config["seed"].is_number_unsigned()) throw ConfigError("config seed must be a non-negative integer");
            return config["seed"].get<std::uint64_t>();
        }
        return kDefaultSeed;
    }

    std::filesystem::path path(const std::optional<std::string>& flag, const char* name, const char* flag_name) const {
        if (auto p = pick<std::string>(flag, config, "paths", name)) return *p;
        throw ConfigError(std::string("missing required ") + flag_name);
    }

    std::optional<std::filesystem::path> optional_path(const std::optional<std::string>& flag, const char* name) const {
        if (auto p = pick<std::string>(flag, config, "paths", name)) return std::filesystem::path(*p);
        return std::nullopt;
    }
};

void write_json(const std::filesystem::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

// Shared training inputs ---------------------------------------------------------

struct TrainInputs {
    std::optional<std::string> train, val, split;
};

void add_train_inputs(CLI::App* sub, TrainInputs& in) {
    sub->add_option("--train", in.train, "Training embeddings (interchange JSONL)");
    sub->add_option("--val", in.val, "Validation embeddings; default carves 1/9 of --train");
    sub->add_option("--split", in.split, "Split file selecting train/val records of --train");
}

std::pair<EmbeddingSet, EmbeddingSet> resolve_train_val(const Common& common, const TrainInputs& in,
                                                        std::uint64_t seed) {
    const auto train_path = common.path(in.train, "train", "--train");
    const EmbeddingSet pool = load_embeddings(train_path);
    if (auto val_path = common.optional_path(in.val, "val")) return {pool, load_embeddings(*val_path)};
    if (auto split_path = common.optional_path(in.split, "split")) {
        json split;
        try {
            split = json::parse(read_file(*split_path));
        } catch (const json::parse_error& e) {
            throw FormatError("split file " + split_path->string() + " is not valid JSON: " + e.what());
        }
        if (split.value("format", "") != kSplitFormat) throw FormatError("not a split file: " + split_path->string());
        std::vector<std::string> train_ids, val_ids;
        for (const auto& [id, part] : split.at("assignment").items()) {
            const auto p = partition_from_string(part.get<std::string>());
            if (p == Partition::train) train_ids.push_back(id);
            if (p == Partition::val) val_ids.push_back(id);
        }
        return {pool.subset(train_ids), pool.subset(val_ids)};
    }
    SplitSpec spec;
    spec.seed = seed;
    spec.fractions = {8.0 / 9.0, 1.0 / 9.0, 0.0};
    const auto a = make_split(pool, spec);
    return {pool.subset(a.ids(Partition::train)), pool.subset(a.ids(Partition::val))};
}

// Subcommands ------------------------------------------------------------------

struct IngestArgs {
    std::optional<std::string> in, out;
};

int cmd_ingest(const Common& common, const IngestArgs& a, std::ostream& out, std::ostream& err) {
    const auto in = common.path(a.in, "in", "--in");
    const auto set = load_embeddings(in);
    const auto manifest = make_manifest(set);
    const auto target = a.out ? std::filesystem::path(*a.out) : manifest_path_for(in);
    write_json(target, manifest);
    log_event(err, "ingest", {{"path", in.string()}, {"count", set.size()}, {"dim", set.dim()}});
    out << json{{"count", set.size()}, {"dim", set.dim()}, {"manifest", target.string()}}.dump() << '\n';
    return kOk;
}

struct SplitArgs {
    std::optional<std::string> in, out, fractions, stratify, exclude_domain, exclude_label;
    bool no_keep_pairs = false;
};

int cmd_split(const Common& common, const SplitArgs& a, std::ostream& out, std::ostream& err) {
    const auto in = common.path(a.in, "in", "--in");
    const auto target = common.path(a.out, "out", "--out");
    const auto& config = common.config;
    SplitSpec spec;
    spec.seed = common.effective_seed();
    if (a.fractions) {
        const auto parts = split_list(*a.fractions);
        if (parts.size() != 3) throw ConfigError("--fractions takes three comma-separated values");
        for (std::size_t i = 0; i < 3; ++i) {
            try {
                spec.fractions[i] = std::stod(parts[i]);
            } catch (const std::exception&) {
                throw ConfigError("invalid fraction '" + parts[i] + "'");
            }
        }
    } else if (auto f = pick<std::vector<double>>(std::nullopt, config, "split", "fractions")) {
        if (f->size() != 3) throw ConfigError("split.fractions must hold three values");
        std::copy(f->begin(), f->end(), spec.fractions.begin());
    }
    std::vector<std::string> stratify{"label"};
    if (a.stratify)
        stratify = split_list(*a.stratify);
    else if (auto s = pick<std::vector<std::string>>(std::nullopt, config, "split", "stratify"))
        stratify = *s;
    spec.stratify_label = spec.stratify_domain = false;
    for (const auto& s : stratify) {
        if (s == "label")
            spec.stratify_label = true;
        else if (s == "domain")
            spec.stratify_domain = true;
        else
            throw ConfigError("cannot stratify by '" + s + "' (expected label and/or domain)");
    }
    spec.keep_pairs_together = !a.no_keep_pairs;
    if (!a.no_keep_pairs)
        if (auto k = pick<bool>(std::nullopt, config, "split", "keep_pairs_together")) spec.keep_pairs_together = *k;
    if (a.exclude_domain || a.exclude_label) {
        spec.exclude_from_train = [d = a.exclude_domain, l = a.exclude_label](const std::string& label,
                                                                              const std::string& domain) {
            return (d && domain == *d) || (l && label == *l);
        };
    }

    const auto set = load_embeddings(in);
    const auto assignment = make_split(set, spec);
    json parts = json::object();
    for (const auto& [id, p] : assignment.assignment) parts[id] = to_string(p);
    const json doc = {
        {"format", kSplitFormat},
        {"seed", spec.seed},
        {"fractions", spec.fractions},
        {"stratify", stratify},
        {"keep_pairs_together", spec.keep_pairs_together},
        {"exclude_domain", a.exclude_domain ? json(*a.exclude_domain) : json(nullptr)},
        {"exclude_label", a.exclude_label ? json(*a.exclude_label) : json(nullptr)},
        {"counts",
         {{"train", assignment.count(Partition::train)},
          {"val", assignment.count(Partition::val)},
          {"test", assignment.count(Partition::test)},
          {"excluded", assignment.count(Partition::excluded)}}},
        {"warnings", assignment.warnings},
        {"assignment", parts},
    };
    write_json(target, doc);
    for (const auto& w : assignment.warnings) log_event(err, "warning", {{"message", w}});
    out << doc["counts"].dump() << '\n';
    return kOk;
}

struct TrainMlpArgs {
    TrainInputs inputs;
    std::optional<std::string> out, log, layer_dims;
    std::optional<std::size_t> classes, epochs, batch_size;
    std::optional<double> lr;
    bool binary = false;
};

int cmd_train_mlp(const Common& common, const TrainMlpArgs& a, std::ostream& out, std::ostream& err) {
    const auto target = common.path(a.out, "out", "--out");
    const auto& config = common.config;
    TrainConfig tc;
    tc.seed = common.effective_seed();
    if (auto v = pick<std::size_t>(a.epochs, config, "train", "epochs")) tc.epochs = *v;
    if (auto v = pick<double>(a.lr, config, "train", "learning_rate")) tc.learning_rate = *v;
    if (auto v = pick<std::size_t>(a.batch_size, config, "train", "batch_size")) tc.batch_size = *v;
    std::vector<std::size_t> dims;
    if (a.layer_dims)
        dims = parse_dims(*a.layer_dims);
    else if (auto d = pick<std::vector<std::size_t>>(std::nullopt, config, "train", "layer_dims"))
        dims = *d;

    const auto [train, val] = resolve_train_val(common, a.inputs, tc.seed);
    if (train.empty()) throw DataError("training selection is empty");
    const std::size_t classes = a.binary ? 2 : train.labels().size();
    if (a.classes && *a.classes != classes)
        throw DataError("--classes " + std::to_string(*a.classes) + " but the training data holds " +
                        std::to_string(classes) + " classes");
    log_event(err, "train-mlp.start",
              {{"train", train.size()}, {"val", val.size()}, {"classes", classes}, {"seed", tc.seed}});
    const auto result = a.binary ? train_binary_mlp(train, val, tc, dims) : train_multiclass_mlp(train, val, tc, dims);
    save_mlp(result.model, target);
    if (auto log_path = common.optional_path(a.log, "log")) write_json(*log_path, result.log.to_json());
    const auto& best = result.log.epochs[result.log.best_epoch - 1];
    log_event(err, "train-mlp.done", {{"best_epoch", result.log.best_epoch}, {"val_accuracy", best.val_accuracy}});
    out << json{{"model", target.string()}, {"best_epoch", result.log.best_epoch}, {"val_accuracy", best.val_accuracy},
                {"seed", tc.seed}}
               .dump()
        << '\n';
    return kOk;
}

struct TrainCknnArgs {
    TrainInputs inputs;
    std::optional<std::string> out, knn_out, log, layer_dims, granularity;
    std::optional<std::size_t> epochs, batch_size, k;
    std::optional<double> lr, margin;
};

int cmd_train_cknn(const Common& common, const TrainCknnArgs& a, std::ostream& out, std::ostream& err) {
    const auto target = common.path(a.out, "out", "--out");
    const auto knn_target = common.path(a.knn_out, "knn_out", "--knn-out");
    const auto& config = common.config;
    ContrastiveConfig cc;
    cc.seed = common.effective_seed();
    if (auto v = pick<std::size_t>(a.epochs, config, "contrastive", "epochs")) cc.epochs = *v;
    if (auto v = pick<double>(a.lr, config, "contrastive", "learning_rate")) cc.learning_rate = *v;
    if (auto v = pick<std::size_t>(a.batch_size, config, "contrastive", "batch_size")) cc.batch_size = *v;
    if (auto v = pick<double>(a.margin, config, "contrastive", "margin")) cc.margin = *v;
    if (auto v = pick<std::string>(a.granularity, config, "contrastive", "class_granularity"))
        cc.granularity = granularity_from_string(*v);
    std::vector<std::size_t> dims;
    if (a.layer_dims)
        dims = parse_dims(*a.layer_dims);
    else if (auto d = pick<std::vector<std::size_t>>(std::nullopt, config, "contrastive", "layer_dims"))
        dims = *d;
    const std::size_t k = pick<std::size_t>(a.k, config, "knn", "k").value_or(5);

    const auto [train, val] = resolve_train_val(common, a.inputs, cc.seed);
    log_event(err, "train-cknn.start", {{"train", train.size()}, {"val", val.size()}, {"seed", cc.seed}});
    const bool nonstandard = !dims.empty() && dims.back() != kProjectionWidth;
    const auto result = train_projection(train, val, cc, dims, nonstandard);
    const auto projected = fit_projected_knn(result.projection, train, k);
    save_projection(result.projection, target);
    save_knn(projected, knn_target);
    if (auto log_path = common.optional_path(a.log, "log")) write_json(*log_path, result.log.to_json());
    const double final_loss = result.log.epochs.back().train_loss;
    log_event(err, "train-cknn.done", {{"final_train_loss", final_loss}});
    out << json{{"model", target.string()}, {"knn", knn_target.string()}, {"final_train_loss", final_loss},
                {"seed", cc.seed}}
               .dump()
        << '\n';
    return kOk;
}

struct FitKnnArgs {
    std::optional<std::string> train, out;
    std::optional<std::size_t> k;
};

int cmd_fit_knn(const Common& common, const FitKnnArgs& a, std::ostream& out, std::ostream& err) {
    const auto train_path = common.path(a.train, "train", "--train");
    const auto target = common.path(a.out, "out", "--out");
    const std::size_t k = pick<std::size_t>(a.k, common.config, "knn", "k").value_or(5);
    const auto model = knn_fit(load_embeddings(train_path), k);
    save_knn(model, target);
    log_event(err, "fit-knn", {{"points", model.points().size()}, {"k", k}});
    out << json{{"model", target.string()}, {"points", model.points().size()}, {"k", k}}.dump() << '\n';
    return kOk;
}

/// Identifies an artifact by its `format` field (first line for KNN stores).
std::string artifact_format(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model: " + path.string());
    std::string first;
    std::getline(in, first);
    try {
        const auto j = json::parse(first);
        if (j.is_object() && j.contains("format") && j["format"].is_string()) return j["format"].get<std::string>();
    } catch (const json::parse_error&) {
    }
    try {
        const auto j = json::parse(read_file(path));
        if (j.is_object() && j.contains("format") && j["format"].is_string()) return j["format"].get<std::string>();
    } catch (const json::parse_error&) {
    }
    throw FormatError("unrecognised model artifact: " + path.string());
}

std::unique_ptr<Classifier> load_classifier(const std::filesystem::path& model_path,
                                            const std::optional<std::filesystem::path>& knn_path) {
    const auto format = artifact_format(model_path);
    if (format == kMlpFormat) return std::make_unique<MlpClassifier>(load_mlp(model_path));
    if (format == kKnnFormat) return std::make_unique<KnnClassifier>(load_knn(model_path));
    if (format == kProjectionFormat) {
        if (!knn_path) throw ConfigError("a contrastive projection needs --knn with its projected store");
        return std::make_unique<ContrastiveKnnClassifier>(load_projection(model_path), load_knn(*knn_path));
    }
    throw FormatError("unsupported model format '" + format + "'");
}

struct ClassifyArgs {
    std::optional<std::string> model, knn, in, out;
};

int cmd_classify(const Common& common, const ClassifyArgs& a, std::ostream& out, std::ostream& err) {
    const auto classifier =
        load_classifier(common.path(a.model, "model", "--model"), common.optional_path(a.knn, "knn"));
    const auto set = load_embeddings(common.path(a.in, "in", "--in"));
    const auto target = common.path(a.out, "out", "--out");
    const auto preds = classifier->predict_all(set);
    std::string lines;
    std::size_t machine = 0;
    for (std::size_t i = 0; i < set.size(); ++i) {
        const auto binary = collapse_to_binary(preds[i]);
        machine += binary == kMachineLabel;
        lines += json{{"id", set[i].id}, {"label", preds[i]}, {"binary", binary}}.dump() + "\n";
    }
    write_file_atomic(target, lines);
    log_event(err, "classify", {{"records", set.size()}});
    out << json{{"records", set.size()}, {"machine", machine}, {"human", set.size() - machine}}.dump() << '\n';
    return kOk;
}

struct AttributeArgs {
    std::optional<std::string> model, in, out;
};

int cmd_attribute(const Common& common, const AttributeArgs& a, std::ostream& out, std::ostream& err) {
    const auto model_path = common.path(a.model, "model", "--model");
    if (artifact_format(model_path) != kMlpFormat) throw FormatError("attribute requires a multiclass MLP artifact");
    const auto model = load_mlp(model_path);
    if (MlpClassifier(model).binary_output()) throw ConfigError("attribute requires a multiclass MLP, not a binary one");
    const auto set = load_embeddings(common.path(a.in, "in", "--in"));
    const auto target = common.path(a.out, "out", "--out");
    std::string lines;
    std::map<std::string, std::size_t> tally;
    for (const auto& r : set.records()) {
        const auto logits = mlp_forward(model, r.vector).logits;
        const auto probs = softmax(logits);
        json p = json::object();
        for (std::size_t c = 0; c < probs.size(); ++c) p[model.class_names[c]] = probs[c];
        const auto& generator = model.class_names[argmax(logits)];
        ++tally[generator];
        lines += json{{"id", r.id}, {"generator", generator}, {"probabilities", p}}.dump() + "\n";
    }
    write_file_atomic(target, lines);
    log_event(err, "attribute", {{"records", set.size()}});
    out << json(tally).dump() << '\n';
    return kOk;
}

struct PerturbArgs {
    std::optional<std::string> in, out, corpus, synonyms;
    std::optional<double> low_prob, synonym_threshold, sentence_floor, ngram_lambda;
    std::optional<std::size_t> max_perturbations, max_candidates;
    bool no_pos_check = false;
};

int cmd_perturb(const Common& common, const PerturbArgs& a, std::ostream& out, std::ostream& err) {
    const auto& config = common.config;
    PerturbationConfig pc;
    if (auto v = pick<double>(a.low_prob, config, "perturbation", "low_prob_threshold")) pc.low_prob_threshold = *v;
    if (auto v = pick<double>(a.synonym_threshold, config, "perturbation", "synonym_similarity_threshold"))
        pc.synonym_similarity_threshold = *v;
    if (auto v = pick<double>(a.sentence_floor, config, "perturbation", "sentence_similarity_floor"))
        pc.sentence_similarity_floor = *v;
    if (auto v = pick<std::size_t>(a.max_perturbations, config, "perturbation", "max_word_perturbations"))
        pc.max_word_perturbations = *v;
    if (auto v = pick<bool>(std::nullopt, config, "perturbation", "pos_check")) pc.pos_check = *v;
    if (a.no_pos_check) pc.pos_check = false;
    pc.validate();
    const double lambda = pick<double>(a.ngram_lambda, config, "perturbation", "ngram_lambda").value_or(0.7);
    const std::size_t max_candidates =
        pick<std::size_t>(a.max_candidates, config, "perturbation", "max_candidates").value_or(50);

    const auto oracle = NgramConfidenceOracle::load(common.path(a.corpus, "corpus", "--corpus"), lambda);
    const auto synonyms = EmbeddingTableSynonyms::load(common.path(a.synonyms, "synonyms", "--synonyms"), max_candidates);
    const auto in_path = common.path(a.in, "in", "--in");
    const auto target = common.path(a.out, "out", "--out");

    std::istringstream input(read_file(in_path));
    std::string line, lines;
    std::size_t line_number = 0, texts = 0, substitutions = 0;
    while (std::getline(input, line)) {
        ++line_number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json row;
        try {
            row = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(std::string("malformed JSON: ") + e.what(), line_number);
        }
        if (!row.is_object() || !row.contains("id") || !row["id"].is_string() || !row.contains("text") ||
            !row["text"].is_string())
            throw ParseError("expected {\"id\": string, \"text\": string}", line_number);
        const auto result = perturb_text(row["text"].get<std::string>(), pc, oracle, synonyms);
        substitutions += result.substitutions.size();
        ++texts;
        lines += perturbation_to_json(row["id"].get<std::string>(), result).dump() + "\n";
    }
    write_file_atomic(target, lines);
    log_event(err, "perturb", {{"texts", texts}, {"substitutions", substitutions}});
    out << json{{"texts", texts}, {"substitutions", substitutions}}.dump() << '\n';
    return kOk;
}

struct EvaluateArgs {
    std::optional<std::string> protocol, classifier, train, test, perturbed, held_out, out, layer_dims,
        projection_dims, granularity;
    std::optional<std::size_t> epochs, cknn_epochs, k, batch_size;
    std::optional<double> lr, margin;
    bool timestamps = false;
};

int cmd_evaluate(const Common& common, const EvaluateArgs& a, std::ostream& out, std::ostream& err) {
    if (!a.protocol) throw ConfigError("missing required --protocol");
    const auto& config = common.config;
    ProtocolSpec spec;
    spec.kind = protocol_kind_from_string(*a.protocol);
    spec.classifier = classifier_kind_from_string(a.classifier.value_or("mlp_multiclass"));
    spec.held_out = a.held_out;
    spec.train_set = common.path(a.train, "train", "--train");
    spec.test_set = common.optional_path(a.test, "test");
    spec.perturbed_set = common.optional_path(a.perturbed, "perturbed");
    spec.seed = common.effective_seed();
    spec.record_timestamps = a.timestamps;
    const auto target = common.path(a.out, "out", "--out");

    auto& opt = spec.options;
    if (auto v = pick<std::size_t>(a.epochs, config, "train", "epochs")) opt.mlp.epochs = *v;
    if (auto v = pick<double>(a.lr, config, "train", "learning_rate")) opt.mlp.learning_rate = *v;
    if (auto v = pick<std::size_t>(a.batch_size, config, "train", "batch_size")) opt.mlp.batch_size = *v;
    if (a.layer_dims)
        opt.mlp_dims = parse_dims(*a.layer_dims);
    else if (auto d = pick<std::vector<std::size_t>>(std::nullopt, config, "train", "layer_dims"))
        opt.mlp_dims = *d;
    if (auto v = pick<std::size_t>(a.cknn_epochs, config, "contrastive", "epochs")) opt.contrastive.epochs = *v;
    if (auto v = pick<double>(std::nullopt, config, "contrastive", "learning_rate")) opt.contrastive.learning_rate = *v;
    if (auto v = pick<std::size_t>(std::nullopt, config, "contrastive", "batch_size")) opt.contrastive.batch_size = *v;
    if (auto v = pick<double>(a.margin, config, "contrastive", "margin")) opt.contrastive.margin = *v;
    if (auto v = pick<std::string>(a.granularity, config, "contrastive", "class_granularity"))
        opt.contrastive.granularity = granularity_from_string(*v);
    if (a.projection_dims)
        opt.projection_dims = parse_dims(*a.projection_dims);
    else if (auto d = pick<std::vector<std::size_t>>(std::nullopt, config, "contrastive", "layer_dims"))
        opt.projection_dims = *d;
    if (auto v = pick<std::size_t>(a.k, config, "knn", "k")) opt.k = *v;
    opt.mlp.seed = opt.contrastive.seed = spec.seed;

    log_event(err, "evaluate.start", {{"protocol", to_string(spec.kind)}, {"classifier", to_string(spec.classifier)},
                                      {"seed", spec.seed}});
    const auto report = run_protocol(spec);
    write_json(target, report);
    log_event(err, "evaluate.done", {{"f1_machine", report["f1_machine"]}});
    out << json{{"report", target.string()}, {"f1_machine", report["f1_machine"]}, {"accuracy", report["accuracy"]},
                {"delta_recall", report["delta_recall"]}}
               .dump()
        << '\n';
    return kOk;
}

struct ExportArgs {
    std::optional<std::string> model, in, out;
};

int cmd_export_features(const Common& common, const ExportArgs& a, std::ostream& out, std::ostream& err) {
    const auto model = load_mlp(common.path(a.model, "model", "--model"));
    const auto set = load_embeddings(common.path(a.in, "in", "--in"));
    const auto target = common.path(a.out, "out", "--out");
    export_features(model, set, target);
    log_event(err, "export-features", {{"rows", set.size()}});
    out << json{{"csv", target.string()}, {"rows", set.size()}}.dump() << '\n';
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Detect and attribute machine-generated text from encoder embeddings", "llmcipher"};
    app.require_subcommand(1);
    Common common;
    app.add_option("--config", common.config_path, "JSON config file (fallback: $LLMCIPHER_CONFIG)");
    app.add_option("--seed", common.seed, "Seed; overrides the config file (default 42)");

    IngestArgs ingest;
    auto* s_ingest = app.add_subcommand("ingest", "Validate an embedding file and write its manifest");
    s_ingest->add_option("--in", ingest.in, "Embedding file");
    s_ingest->add_option("--out", ingest.out, "Manifest path (default <name>.meta.json)");

    SplitArgs split;
    auto* s_split = app.add_subcommand("split", "Stratified train/val/test assignment");
    s_split->add_option("--in", split.in, "Embedding file");
    s_split->add_option("--out", split.out, "Split JSON");
    s_split->add_option("--fractions", split.fractions, "train,val,test (default 0.8,0.1,0.1)");
    s_split->add_option("--stratify", split.stratify, "label and/or domain (default label)");
    s_split->add_option("--exclude-domain", split.exclude_domain, "Domain never placed in train/val");
    s_split->add_option("--exclude-label", split.exclude_label, "Label never placed in train/val");
    s_split->add_flag("--no-keep-pairs", split.no_keep_pairs, "Split paired records independently");

    TrainMlpArgs mlp;
    auto* s_mlp = app.add_subcommand("train-mlp", "Train the six-layer MLP classifier");
    add_train_inputs(s_mlp, mlp.inputs);
    s_mlp->add_option("--out", mlp.out, "Model artifact");
    s_mlp->add_option("--log", mlp.log, "Training log JSON");
    s_mlp->add_option("--classes", mlp.classes, "Expected class count (checked against the data)");
    s_mlp->add_flag("--binary", mlp.binary, "Human vs machine head");
    s_mlp->add_option("--epochs", mlp.epochs, "Epochs (default 500)");
    s_mlp->add_option("--lr", mlp.lr, "Learning rate (default 1e-4)");
    s_mlp->add_option("--batch-size", mlp.batch_size, "Mini-batch size (default 64)");
    s_mlp->add_option("--layer-dims", mlp.layer_dims, "Comma-separated widths overriding the standard funnel");

    TrainCknnArgs cknn;
    auto* s_cknn = app.add_subcommand("train-cknn", "Train the contrastive projection and its KNN store");
    add_train_inputs(s_cknn, cknn.inputs);
    s_cknn->add_option("--out", cknn.out, "Projection artifact");
    s_cknn->add_option("--knn-out", cknn.knn_out, "Projected KNN store");
    s_cknn->add_option("--log", cknn.log, "Training log JSON");
    s_cknn->add_option("--epochs", cknn.epochs, "Epochs (default 100)");
    s_cknn->add_option("--lr", cknn.lr, "Learning rate (default 1e-4)");
    s_cknn->add_option("--batch-size", cknn.batch_size, "Triplets per batch (default 64)");
    s_cknn->add_option("--margin", cknn.margin, "Triplet margin (default 1.0)");
    s_cknn->add_option("--granularity", cknn.granularity, "binary or generator (default binary)");
    s_cknn->add_option("--layer-dims", cknn.layer_dims, "Comma-separated projection widths");
    s_cknn->add_option("--k", cknn.k, "Neighbours (default 5)");

    FitKnnArgs knn;
    auto* s_knn = app.add_subcommand("fit-knn", "Store a Euclidean KNN model");
    s_knn->add_option("--train", knn.train, "Training embeddings");
    s_knn->add_option("--out", knn.out, "KNN store");
    s_knn->add_option("--k", knn.k, "Neighbours (default 5)");

    ClassifyArgs classify;
    auto* s_classify = app.add_subcommand("classify", "Label embeddings with a trained model");
    s_classify->add_option("--model", classify.model, "MLP, KNN, or projection artifact");
    s_classify->add_option("--knn", classify.knn, "Projected KNN store (projection models)");
    s_classify->add_option("--in", classify.in, "Embeddings to label");
    s_classify->add_option("--out", classify.out, "Predictions JSONL");

    AttributeArgs attribute;
    auto* s_attribute = app.add_subcommand("attribute", "Name the generator with a multiclass MLP");
    s_attribute->add_option("--model", attribute.model, "Multiclass MLP artifact");
    s_attribute->add_option("--in", attribute.in, "Embeddings");
    s_attribute->add_option("--out", attribute.out, "Attribution JSONL");

    PerturbArgs perturb;
    auto* s_perturb = app.add_subcommand("perturb", "Synonym-substitution attack on texts");
    s_perturb->add_option("--in", perturb.in, "Texts JSONL {id, text}");
    s_perturb->add_option("--out", perturb.out, "Perturbed JSONL");
    s_perturb->add_option("--corpus", perturb.corpus, "Plain-text corpus for the n-gram confidence model");
    s_perturb->add_option("--synonyms", perturb.synonyms, "Word embedding table (word v1 v2 ...)");
    s_perturb->add_option("--low-prob-threshold", perturb.low_prob, "Default 0.01");
    s_perturb->add_option("--synonym-threshold", perturb.synonym_threshold, "Default 0.7");
    s_perturb->add_option("--sentence-floor", perturb.sentence_floor, "Default 0.8");
    s_perturb->add_option("--max-perturbations", perturb.max_perturbations, "Default 10");
    s_perturb->add_option("--max-candidates", perturb.max_candidates, "Synonyms considered per word (default 50)");
    s_perturb->add_option("--ngram-lambda", perturb.ngram_lambda, "Bigram weight (default 0.7)");
    s_perturb->add_flag("--no-pos-check", perturb.no_pos_check, "Disable the part-of-speech check");

    EvaluateArgs evaluate;
    auto* s_eval = app.add_subcommand("evaluate", "Run an evaluation protocol and write a report");
    s_eval->add_option("--protocol", evaluate.protocol,
                       "attribution | cross_domain | cross_generator | transfer | adversarial");
    s_eval->add_option("--classifier", evaluate.classifier, "mlp_multiclass | mlp_binary | knn | cknn");
    s_eval->add_option("--train", evaluate.train, "Training embeddings");
    s_eval->add_option("--test", evaluate.test, "Test embeddings (default: 80/10/10 split of --train)");
    s_eval->add_option("--perturbed", evaluate.perturbed, "Perturbed test embeddings (adversarial)");
    s_eval->add_option("--held-out", evaluate.held_out, "Held-out domain or generator");
    s_eval->add_option("--out", evaluate.out, "Report JSON");
    s_eval->add_option("--epochs", evaluate.epochs, "MLP epochs");
    s_eval->add_option("--lr", evaluate.lr, "MLP learning rate");
    s_eval->add_option("--batch-size", evaluate.batch_size, "MLP batch size");
    s_eval->add_option("--layer-dims", evaluate.layer_dims, "MLP widths");
    s_eval->add_option("--cknn-epochs", evaluate.cknn_epochs, "Projection epochs");
    s_eval->add_option("--margin", evaluate.margin, "Triplet margin");
    s_eval->add_option("--granularity", evaluate.granularity, "binary or generator");
    s_eval->add_option("--projection-dims", evaluate.projection_dims, "Projection widths");
    s_eval->add_option("--k", evaluate.k, "Neighbours");
    s_eval->add_flag("--timestamps", evaluate.timestamps, "Record wall-clock times (reports stop being byte-stable)");

    ExportArgs exporter;
    auto* s_export = app.add_subcommand("export-features", "Write penultimate-layer features as CSV");
    s_export->add_option("--model", exporter.model, "MLP artifact");
    s_export->add_option("--in", exporter.in, "Embeddings");
    s_export->add_option("--out", exporter.out, "CSV path");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return kUsage;
    }

    try {
        common.config = load_config(common.config_path);
        if (s_ingest->parsed()) return cmd_ingest(common, ingest, out, err);
        if (s_split->parsed()) return cmd_split(common, split, out, err);
        if (s_mlp->parsed()) return cmd_train_mlp(common, mlp, out, err);
        if (s_cknn->parsed()) return cmd_train_cknn(common, cknn, out, err);
        if (s_knn->parsed()) return cmd_fit_knn(common, knn, out, err);
        if (s_classify->parsed()) return cmd_classify(common, classify, out, err);
        if (s_attribute->parsed()) return cmd_attribute(common, attribute, out, err);
        if (s_perturb->parsed()) return cmd_perturb(common, perturb, out, err);
        if (s_eval->parsed()) return cmd_evaluate(common, evaluate, out, err);
        if (s_export->parsed()) return cmd_export_features(common, exporter, out, err);
    } catch (const ConfigError& e) {
        log_event(err, "error", {{"kind", "usage"}, {"message", e.what()}});
        return kUsage;
    } catch (const NumericError& e) {
        log_event(err, "error", {{"kind", "numeric"}, {"message", e.what()}});
        return kNumeric;
    } catch (const Error& e) {
        log_event(err, "error", {{"kind", "data"}, {"message", e.what()}});
        return kData;
    }
    err << app.help();
    return kUsage;
}

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace llmcipher::cli
