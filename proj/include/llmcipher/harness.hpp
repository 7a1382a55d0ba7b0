#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmcipher/contrastive.hpp"
#include "llmcipher/embedding_store.hpp"
#include "llmcipher/knn.hpp"
#include "llmcipher/mlp.hpp"

namespace llmcipher {

inline constexpr const char* kReportFormat = "llmcipher-report-v1";
inline constexpr const char* kMachineLabel = "machine";

// Metrics ----------------------------------------------------------------------

/// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
    std::vector<std::string> class_names;
    std::vector<std::vector<std::uint64_t>> counts;

    static ConfusionMatrix zeros(std::vector<std::string> class_names);
    std::size_t index_of(const std::string& name) const;
    std::uint64_t total() const;
    std::uint64_t trace() const;
    std::uint64_t row_sum(std::size_t i) const;
    std::uint64_t column_sum(std::size_t j) const;
};

/// Ratios in [0, 1]; nullopt where the denominator is zero.
struct ClassMetrics {
    std::string name;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f1;
    std::uint64_t support = 0;
};

struct MetricsReport {
    ConfusionMatrix confusion;
    std::vector<ClassMetrics> per_class;
    std::optional<double> accuracy;
};

/// F1 is 2TP / (2TP + FP + FN): zero when a present class is never predicted
/// correctly, undefined only when the class is absent from truths and predictions.
MetricsReport metrics_from_confusion(const ConfusionMatrix& confusion);
MetricsReport confusion_and_metrics(std::span<const std::string> preds, std::span<const std::string> truths,
                                    const std::vector<std::string>& class_names);

/// Ratio -> percent rounded to one decimal; nullopt stays nullopt.
std::optional<double> percent1(std::optional<double> ratio);

/// "human" stays human; every other label becomes "machine".
std::string collapse_to_binary(const std::string& label);

/// F1 (percent) with "machine" as the positive class. Labels may be
/// generator ids; they are collapsed first. nullopt when truths hold no machine sample.
std::optional<double> f1_machine(std::span<const std::string> preds, std::span<const std::string> truths);

/// Recall (percent) over machine-labelled truths; nullopt when there are none.
std::optional<double> machine_recall(std::span<const std::string> preds, std::span<const std::string> truths);

/// 100 * (adv - base) / base; nullopt when base is zero.
std::optional<double> delta_recall(double recall_base, double recall_adv);

nlohmann::json metrics_to_json(const MetricsReport& report);

// Classifiers --------------------------------------------------------------------

enum class ClassifierKind { mlp_multiclass, mlp_binary, knn, cknn };
enum class ProtocolKind { attribution, cross_domain, cross_generator, transfer, adversarial };

const char* to_string(ClassifierKind k);
const char* to_string(ProtocolKind k);
ClassifierKind classifier_kind_from_string(const std::string& s);
ProtocolKind protocol_kind_from_string(const std::string& s);

struct ClassifierOptions {
    TrainConfig mlp;
    std::vector<std::size_t> mlp_dims;  // empty: standard funnel
    ContrastiveConfig contrastive;
    std::vector<std::size_t> projection_dims;  // empty: desk preset
    std::size_t k = 5;

    nlohmann::json to_json() const;
};

/// A trained detector that labels embedding vectors.
class Classifier {
public:
    virtual ~Classifier() = default;
    virtual std::string predict(std::span<const float> x) const = 0;
    virtual std::vector<std::string> predict_all(const EmbeddingSet& set) const;
    /// True when predictions are only "human" / "machine".
    virtual bool binary_output() const { return false; }
};

class MlpClassifier final : public Classifier {
public:
    explicit MlpClassifier(MlpModel model) : model_(std::move(model)) {}
    std::string predict(std::span<const float> x) const override;
    std::vector<std::string> predict_all(const EmbeddingSet& set) const override;
    bool binary_output() const override;
    const MlpModel& model() const { return model_; }

private:
    MlpModel model_;
};

class KnnClassifier final : public Classifier {
public:
    explicit KnnClassifier(KnnModel model) : model_(std::move(model)) {}
    std::string predict(std::span<const float> x) const override;
    const KnnModel& model() const { return model_; }

private:
    KnnModel model_;
};

class ContrastiveKnnClassifier final : public Classifier {
public:
    ContrastiveKnnClassifier(ProjectionNetwork projection, KnnModel projected)
        : projection_(std::move(projection)), knn_(std::move(projected)) {}
    std::string predict(std::span<const float> x) const override;
    std::vector<std::string> predict_all(const EmbeddingSet& set) const override;
    const ProjectionNetwork& projection() const { return projection_; }
    const KnnModel& knn() const { return knn_; }

private:
    ProjectionNetwork projection_;
    KnnModel knn_;
};

/// Multiclass MLP: class names are the sorted training labels.
MlpTrainResult train_multiclass_mlp(const EmbeddingSet& train, const EmbeddingSet& val, TrainConfig config,
                                    const std::vector<std::size_t>& dims = {});
/// Binary MLP over {human, machine}.
MlpTrainResult train_binary_mlp(const EmbeddingSet& train, const EmbeddingSet& val, TrainConfig config,
                                const std::vector<std::size_t>& dims = {});

std::unique_ptr<Classifier> train_classifier(ClassifierKind kind, const EmbeddingSet& train, const EmbeddingSet& val,
                                             const ClassifierOptions& options);

// Protocols --------------------------------------------------------------------

struct ProtocolSpec {
    ProtocolKind kind = ProtocolKind::attribution;
    ClassifierKind classifier = ClassifierKind::mlp_multiclass;
    std::optional<std::string> held_out;
    std::filesystem::path train_set;
    std::optional<std::filesystem::path> test_set;       // absent: 80/10/10 split of train_set
    std::optional<std::filesystem::path> perturbed_set;  // adversarial only
    std::uint64_t seed = 42;
    ClassifierOptions options;
    bool record_timestamps = false;

    void validate() const;
    nlohmann::json to_json() const;
};

struct ProtocolData {
    EmbeddingSet train;
    EmbeddingSet val;
    EmbeddingSet test;
    std::optional<EmbeddingSet> perturbed;  // test set with machine records replaced by perturbed versions
};

/// Loads files and builds the train/val/test sets for `spec`.
ProtocolData prepare_protocol_data(const ProtocolSpec& spec);

/// Scores `classifier` on already prepared data and returns the report.
nlohmann::json evaluate_protocol(const ProtocolSpec& spec, const ProtocolData& data, const Classifier& classifier);

nlohmann::json run_protocol(const ProtocolSpec& spec);

// Feature export ---------------------------------------------------------------

/// RFC 4180 CSV: header `id,label,domain,f0..f255`, one row per record.
std::string features_csv(const MlpModel& model, const EmbeddingSet& set);
void export_features(const MlpModel& model, const EmbeddingSet& set, const std::filesystem::path& path);

}  // namespace llmcipher
