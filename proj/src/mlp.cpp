#include "llmcipher/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "llmcipher/errors.hpp"
#include "llmcipher/io.hpp"

namespace llmcipher {

using nlohmann::json;

std::vector<std::size_t> standard_mlp_dims(std::size_t input_dim, std::size_t class_count) {
    return {input_dim, 1024, 512, 256, 256, 256, class_count};
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (class_count < 2) throw ConfigError("class_count must be at least 2");
}

json TrainConfig::to_json() const {
    return {{"epochs", epochs},
            {"learning_rate", learning_rate},
            {"batch_size", batch_size},
            {"seed", seed},
            {"class_count", class_count}};
}

TrainConfig TrainConfig::from_json(const json& j) {
    TrainConfig c;
    c.epochs = j.at("epochs").get<std::size_t>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.class_count = j.at("class_count").get<std::size_t>();
    return c;
}

bool MlpModel::has_standard_shape() const {
    const auto& d = network.dims();
    return d.size() == kMlpLayerCount + 1 && d[kMlpLayerCount - 1] == kPenultimateWidth;
}

MlpModel mlp_init(const std::vector<std::size_t>& layer_dims, std::uint64_t seed, bool allow_nonstandard) {
    if (layer_dims.size() < 2) throw ConfigError("layer_dims needs at least input and output widths");
    if (!allow_nonstandard) {
        if (layer_dims.size() != kMlpLayerCount + 1)
            throw ConfigError("classifier must have " + std::to_string(kMlpLayerCount) + " weight layers, got " +
                              std::to_string(layer_dims.size() - 1));
        if (layer_dims[kMlpLayerCount - 1] != kPenultimateWidth)
            throw ConfigError("penultimate layer width must be 256, got " +
                              std::to_string(layer_dims[kMlpLayerCount - 1]));
    }
    MlpModel model;
    model.network = DenseNetwork<float>::he_uniform(layer_dims, seed);
    model.seed = seed;
    model.train_config.seed = seed;
    model.train_config.class_count = layer_dims.back();
    for (std::size_t c = 0; c < layer_dims.back(); ++c) model.class_names.push_back(std::to_string(c));
    return model;
}

namespace {

DenseNetwork<float>::Matrix row_batch(std::span<const float> x) {
    DenseNetwork<float>::Matrix batch(1, static_cast<Eigen::Index>(x.size()));
    std::copy(x.begin(), x.end(), batch.data());
    return batch;
}

std::vector<float> row_of(const DenseNetwork<float>::Matrix& m, Eigen::Index r) {
    return {m.row(r).data(), m.row(r).data() + m.cols()};
}

}  // namespace

MlpForward mlp_forward(const MlpModel& model, std::span<const float> x) {
    if (x.size() != model.network.input_dim())
        throw DimensionError("mlp_forward: input width " + std::to_string(x.size()) + ", expected " +
                             std::to_string(model.network.input_dim()));
    const auto trace = model.network.forward(row_batch(x));
    MlpForward out;
    out.logits = row_of(trace.activations.back(), 0);
    for (std::size_t l = 1; l + 1 < trace.activations.size(); ++l) out.hidden.push_back(row_of(trace.activations[l], 0));
    return out;
}

template <typename T>
LossGradients<T> cross_entropy_backward(const DenseNetwork<T>& net, const typename DenseNetwork<T>::Matrix& batch,
                                        std::span<const std::size_t> classes) {
    using Matrix = typename DenseNetwork<T>::Matrix;
    if (static_cast<std::size_t>(batch.rows()) != classes.size())
        throw DimensionError("cross_entropy_backward: batch rows and class labels differ");
    if (classes.empty()) throw DomainError("cross_entropy_backward: empty batch");
    const auto C = static_cast<std::size_t>(net.output_dim());
    for (const auto c : classes)
        if (c >= C) throw DomainError("class index " + std::to_string(c) + " outside [0, " + std::to_string(C) + ")");

    const auto trace = net.forward(batch);
    const Matrix& logits = trace.activations.back();
    const auto B = logits.rows();
    Matrix grad(B, logits.cols());
    double loss = 0.0;
    for (Eigen::Index r = 0; r < B; ++r) {
        const T m = logits.row(r).maxCoeff();
        T sum = T(0);
        for (Eigen::Index c = 0; c < logits.cols(); ++c) {
            grad(r, c) = std::exp(logits(r, c) - m);
            sum += grad(r, c);
        }
        grad.row(r) /= sum;
        const auto y = static_cast<Eigen::Index>(classes[static_cast<std::size_t>(r)]);
        loss += static_cast<double>(std::log(sum) + m - logits(r, y));
        grad(r, y) -= T(1);
    }
    grad /= static_cast<T>(B);
    LossGradients<T> out;
    out.loss = loss / static_cast<double>(B);
    out.gradients = net.backward(trace, grad);
    return out;
}

template LossGradients<float> cross_entropy_backward<float>(const DenseNetwork<float>&,
                                                            const DenseNetwork<float>::Matrix&,
                                                            std::span<const std::size_t>);
template LossGradients<double> cross_entropy_backward<double>(const DenseNetwork<double>&,
                                                              const DenseNetwork<double>::Matrix&,
                                                              std::span<const std::size_t>);

LossGradients<float> mlp_backward(const MlpModel& model, std::span<const float> x, std::size_t true_class) {
    if (x.size() != model.network.input_dim())
        throw DimensionError("mlp_backward: input width " + std::to_string(x.size()) + ", expected " +
                             std::to_string(model.network.input_dim()));
    const std::size_t classes[] = {true_class};
    return cross_entropy_backward(model.network, row_batch(x), classes);
}

std::vector<double> softmax(std::span<const float> logits) {
    if (logits.empty()) return {};
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) sum += (p[i] = std::exp(static_cast<double>(logits[i]) - m));
    for (auto& v : p) v /= sum;
    return p;
}

std::size_t argmax(std::span<const float> values) {
    return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

std::size_t mlp_predict(const MlpModel& model, std::span<const float> x) {
    return argmax(mlp_forward(model, x).logits);
}

std::vector<std::size_t> mlp_predict_batch(const MlpModel& model, const std::vector<std::vector<float>>& xs) {
    std::vector<std::size_t> out;
    out.reserve(xs.size());
    constexpr std::size_t kChunk = 256;
    for (std::size_t start = 0; start < xs.size(); start += kChunk) {
        const std::size_t end = std::min(xs.size(), start + kChunk);
        const std::vector<std::vector<float>> chunk(xs.begin() + static_cast<std::ptrdiff_t>(start),
                                                    xs.begin() + static_cast<std::ptrdiff_t>(end));
        const auto logits = model.network.output(to_batch<float>(chunk, model.network.input_dim()));
        for (Eigen::Index r = 0; r < logits.rows(); ++r) out.push_back(argmax(row_of(logits, r)));
    }
    return out;
}

json TrainingLog::to_json() const {
    json rows = json::array();
    for (const auto& e : epochs)
        rows.push_back({{"epoch", e.epoch}, {"mean_loss", e.mean_loss}, {"val_accuracy", e.val_accuracy}});
    return {{"epochs", rows}, {"best_epoch", best_epoch}};
}

std::size_t select_best_epoch(std::span<const double> val_accuracy) {
    if (val_accuracy.empty()) throw DomainError("select_best_epoch: no epochs");
    return static_cast<std::size_t>(std::max_element(val_accuracy.begin(), val_accuracy.end()) - val_accuracy.begin());
}

namespace {

double accuracy(const MlpModel& model, const std::vector<Example>& data) {
    std::vector<std::vector<float>> xs;
    xs.reserve(data.size());
    for (const auto& e : data) xs.push_back(e.x);
    const auto preds = mlp_predict_batch(model, xs);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) correct += preds[i] == data[i].y ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace

MlpTrainResult train_mlp(const std::vector<Example>& train, const std::vector<Example>& val, const TrainConfig& config,
                         std::vector<std::size_t> layer_dims, bool allow_nonstandard) {
    config.validate();
    if (train.empty()) throw DataError("train_mlp: empty training set");
    if (val.empty()) throw DataError("train_mlp: empty validation set");
    const std::size_t width = train.front().x.size();
    for (const auto* data : {&train, &val})
        for (const auto& e : *data) {
            if (e.x.size() != width) throw DimensionError("train_mlp: inconsistent input widths");
            if (e.y >= config.class_count)
                throw DomainError("train_mlp: label " + std::to_string(e.y) + " outside [0, " +
                                  std::to_string(config.class_count) + ")");
        }
    if (layer_dims.empty()) layer_dims = standard_mlp_dims(width, config.class_count);
    if (layer_dims.front() != width || layer_dims.back() != config.class_count)
        throw ConfigError("train_mlp: layer_dims do not match input width / class count");

    MlpModel model = mlp_init(layer_dims, config.seed, allow_nonstandard);
    model.train_config = config;
    AdamOptimizer<float> adam(model.network);
    Pcg32 shuffler(config.seed, 1);
    const auto lr = static_cast<float>(config.learning_rate);

    MlpTrainResult result;
    DenseNetwork<float> best = model.network;
    double best_accuracy = -1.0;
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        shuffler.shuffle(std::span<std::size_t>(order));
        double loss_sum = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            DenseNetwork<float>::Matrix batch(static_cast<Eigen::Index>(end - start), static_cast<Eigen::Index>(width));
            std::vector<std::size_t> classes;
            for (std::size_t i = start; i < end; ++i) {
                const auto& e = train[order[i]];
                std::copy(e.x.begin(), e.x.end(), batch.row(static_cast<Eigen::Index>(i - start)).data());
                classes.push_back(e.y);
            }
            auto step = cross_entropy_backward(model.network, batch, classes);
            if (!std::isfinite(step.loss))
                throw NumericError("train_mlp: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batch_index));
            loss_sum += step.loss * static_cast<double>(end - start);
            adam.step(model.network, step.gradients, lr);
        }
        const double val_accuracy = accuracy(model, val);
        result.log.epochs.push_back({epoch, loss_sum / static_cast<double>(train.size()), val_accuracy});
        if (val_accuracy > best_accuracy) {
            best_accuracy = val_accuracy;
            best = model.network;
            result.log.best_epoch = epoch;
        }
    }
    model.network = std::move(best);
    result.model = std::move(model);
    return result;
}

std::vector<float> penultimate_features(const MlpModel& model, std::span<const float> x) {
    if (!model.has_standard_shape())
        throw UnsupportedError("penultimate_features requires six layers with a 256-wide penultimate layer");
    return mlp_forward(model, x).hidden[kMlpLayerCount - 2];
}

json mlp_to_json(const MlpModel& model) {
    return {{"format", kMlpFormat},
            {"layer_dims", model.layer_dims()},
            {"activation", "relu"},
            {"seed", model.seed},
            {"train_config", model.train_config.to_json()},
            {"class_names", model.class_names},
            {"layers", layers_to_json(model.network)}};
}

MlpModel mlp_from_json(const json& j) {
    try {
        if (j.value("format", "") != kMlpFormat) throw FormatError("not a " + std::string(kMlpFormat) + " artifact");
        if (j.value("activation", "") != "relu") throw FormatError("unsupported activation");
        MlpModel model;
        const auto dims = j.at("layer_dims").get<std::vector<std::size_t>>();
        model.network = layers_from_json(dims, j.at("layers"));
        model.seed = j.at("seed").get<std::uint64_t>();
        model.train_config = TrainConfig::from_json(j.at("train_config"));
        model.class_names = j.at("class_names").get<std::vector<std::string>>();
        if (model.class_names.size() != dims.back())
            throw FormatError("class_names length does not match the output width");
        return model;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed mlp artifact: ") + e.what());
    }
}

std::string serialize_mlp(const MlpModel& model) { return mlp_to_json(model).dump() + "\n"; }

void save_mlp(const MlpModel& model, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_mlp(model));
}

MlpModel load_mlp(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError("malformed mlp artifact " + path.string() + ": " + e.what());
    }
    return mlp_from_json(j);
}

}  // namespace llmcipher
