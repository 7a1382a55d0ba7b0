#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmcipher/network.hpp"

namespace llmcipher {

inline constexpr const char* kMlpFormat = "llmcipher-mlp-v1";

/// Six weight layers funnelling to a 256-wide penultimate layer.
inline constexpr std::size_t kMlpLayerCount = 6;
inline constexpr std::size_t kPenultimateWidth = 256;

/// [input, 1024, 512, 256, 256, 256, classes]
std::vector<std::size_t> standard_mlp_dims(std::size_t input_dim, std::size_t class_count);

struct TrainConfig {
    std::size_t epochs = 500;
    double learning_rate = 1e-4;
    std::size_t batch_size = 64;
    std::uint64_t seed = 42;
    std::size_t class_count = 2;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

struct MlpModel {
    DenseNetwork<float> network;
    std::vector<std::string> class_names;  // index = output unit
    std::uint64_t seed = 0;
    TrainConfig train_config;

    const std::vector<std::size_t>& layer_dims() const { return network.dims(); }
    std::size_t class_count() const { return network.output_dim(); }
    /// True for six weight layers with a 256-wide penultimate layer.
    bool has_standard_shape() const;
};

/// Throws ConfigError unless `dims` describes six weight layers with a
/// 256-wide penultimate layer; `allow_nonstandard` relaxes that for toy models.
MlpModel mlp_init(const std::vector<std::size_t>& layer_dims, std::uint64_t seed, bool allow_nonstandard = false);

struct MlpForward {
    std::vector<float> logits;
    std::vector<std::vector<float>> hidden;  // post-ReLU output of each hidden layer
};

MlpForward mlp_forward(const MlpModel& model, std::span<const float> x);

template <typename T>
struct LossGradients {
    double loss = 0.0;  // mean over the batch
    typename DenseNetwork<T>::Gradients gradients;
};

/// Mean softmax cross-entropy over a batch and its analytic gradients.
template <typename T>
LossGradients<T> cross_entropy_backward(const DenseNetwork<T>& net, const typename DenseNetwork<T>::Matrix& batch,
                                        std::span<const std::size_t> classes);

LossGradients<float> mlp_backward(const MlpModel& model, std::span<const float> x, std::size_t true_class);

/// Numerically stable softmax in double precision.
std::vector<double> softmax(std::span<const float> logits);

/// Index of the largest logit; ties resolve to the lowest index.
std::size_t argmax(std::span<const float> values);

std::size_t mlp_predict(const MlpModel& model, std::span<const float> x);
std::vector<std::size_t> mlp_predict_batch(const MlpModel& model, const std::vector<std::vector<float>>& xs);

struct Example {
    std::vector<float> x;
    std::size_t y = 0;
};

struct EpochLog {
    std::size_t epoch = 0;  // 1-based
    double mean_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainingLog {
    std::vector<EpochLog> epochs;
    std::size_t best_epoch = 0;  // 1-based
    nlohmann::json to_json() const;
};

struct MlpTrainResult {
    MlpModel model;
    TrainingLog log;
};

/// Earliest index holding the maximum value.
std::size_t select_best_epoch(std::span<const double> val_accuracy);

/// Seeded mini-batch Adam on mean cross-entropy; returns the parameters from
/// the epoch with the highest validation accuracy (earliest on ties).
/// Empty `layer_dims` selects standard_mlp_dims.
MlpTrainResult train_mlp(const std::vector<Example>& train, const std::vector<Example>& val, const TrainConfig& config,
                         std::vector<std::size_t> layer_dims = {}, bool allow_nonstandard = false);

/// Post-ReLU activations of layer 5 (the 256-wide layer feeding the output).
std::vector<float> penultimate_features(const MlpModel& model, std::span<const float> x);

nlohmann::json mlp_to_json(const MlpModel& model);
MlpModel mlp_from_json(const nlohmann::json& j);
std::string serialize_mlp(const MlpModel& model);
void save_mlp(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_mlp(const std::filesystem::path& path);

}  // namespace llmcipher
