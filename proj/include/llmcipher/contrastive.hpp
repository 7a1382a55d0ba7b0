#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmcipher/embedding_store.hpp"
#include "llmcipher/knn.hpp"
#include "llmcipher/network.hpp"

namespace llmcipher {

inline constexpr const char* kProjectionFormat = "llmcipher-cproj-v1";
inline constexpr std::size_t kProjectionWidth = 512;

/// Which labels count as "the same class" when drawing positives.
enum class ClassGranularity { binary, generator };

const char* to_string(ClassGranularity g);
ClassGranularity granularity_from_string(const std::string& s);

struct ContrastiveConfig {
    double margin = 1.0;
    std::size_t epochs = 100;
    double learning_rate = 1e-4;
    std::size_t batch_size = 64;
    std::uint64_t seed = 42;
    ClassGranularity granularity = ClassGranularity::binary;

    void validate() const;
    nlohmann::json to_json() const;
    static ContrastiveConfig from_json(const nlohmann::json& j);
};

/// [input, 1024, 512, 512]
std::vector<std::size_t> desk_projection_dims(std::size_t input_dim);
/// [input, 8192, 8192, 8192, 512]: about 1.5e8 parameters for a 2048-wide input.
std::vector<std::size_t> full_scale_projection_dims(std::size_t input_dim);

struct ProjectionNetwork {
    DenseNetwork<float> network;
    double margin = 1.0;
    std::uint64_t seed = 0;
    ContrastiveConfig config;

    std::vector<float> project(std::span<const float> x) const;
    std::vector<std::vector<float>> project_all(const std::vector<std::vector<float>>& xs) const;
};

/// Output width must be 512 unless `allow_nonstandard` is set (toy tests).
ProjectionNetwork projection_init(const std::vector<std::size_t>& layer_dims, std::uint64_t seed,
                                  bool allow_nonstandard = false);

/// 1 when both labels are human or both are machine labels, else 0.
int pair_label(const std::string& label_i, const std::string& label_j);

struct Triplet {
    std::string anchor_id;
    std::string positive_id;
    std::string negative_id;
    bool operator==(const Triplet&) const = default;
};

/// Index form used by the trainer; one entry per anchor in input order.
struct TripletIndex {
    std::size_t anchor = 0;
    std::size_t positive = 0;
    std::size_t negative = 0;
};

std::vector<TripletIndex> sample_triplet_indices(const std::vector<std::string>& labels, std::size_t epoch,
                                                 const ContrastiveConfig& config);
std::vector<Triplet> sample_triplets(const EmbeddingSet& set, std::size_t epoch, const ContrastiveConfig& config);

/// max(0, D(a,p) - D(a,n) + m) with Euclidean D.
template <typename T>
double triplet_loss(std::span<const T> anchor, std::span<const T> positive, std::span<const T> negative, double margin);

double triplet_loss(const std::vector<float>& anchor, const std::vector<float>& positive,
                    const std::vector<float>& negative, double margin);

template <typename T>
struct TripletLossGradients {
    double loss = 0.0;  // mean over the batch
    typename DenseNetwork<T>::Gradients gradients;
};

/// Mean triplet loss over a batch of (anchor, positive, negative) rows pushed
/// through `net`, with gradients accumulated across all three legs.
template <typename T>
TripletLossGradients<T> triplet_backward(const DenseNetwork<T>& net, const typename DenseNetwork<T>::Matrix& anchors,
                                         const typename DenseNetwork<T>::Matrix& positives,
                                         const typename DenseNetwork<T>::Matrix& negatives, double margin);

struct ContrastiveEpochLog {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    std::optional<double> val_loss;
};

struct ContrastiveLog {
    std::vector<ContrastiveEpochLog> epochs;
    nlohmann::json to_json() const;
};

struct ProjectionTrainResult {
    ProjectionNetwork projection;
    ContrastiveLog log;
};

/// Trains on one triplet per training record per epoch and returns the
/// final-epoch network. `val` may be empty; validation loss is only logged.
ProjectionTrainResult train_projection(const EmbeddingSet& train, const EmbeddingSet& val,
                                       const ContrastiveConfig& config, std::vector<std::size_t> layer_dims = {},
                                       bool allow_nonstandard = false);

/// KNN over projected training points.
KnnModel fit_projected_knn(const ProjectionNetwork& projection, const EmbeddingSet& train, std::size_t k = 5);

KnnPrediction project_and_classify(const ProjectionNetwork& projection, const KnnModel& projected_knn,
                                   std::span<const float> query);

nlohmann::json projection_to_json(const ProjectionNetwork& projection);
ProjectionNetwork projection_from_json(const nlohmann::json& j);
std::string serialize_projection(const ProjectionNetwork& projection);
void save_projection(const ProjectionNetwork& projection, const std::filesystem::path& path);
ProjectionNetwork load_projection(const std::filesystem::path& path);

}  // namespace llmcipher
