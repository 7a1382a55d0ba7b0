#include "llmcipher/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "llmcipher/errors.hpp"
#include "llmcipher/io.hpp"
#include "llmcipher/numerics.hpp"

namespace llmcipher {

using nlohmann::json;

const char* to_string(ClassGranularity g) { return g == ClassGranularity::binary ? "binary" : "generator"; }

ClassGranularity granularity_from_string(const std::string& s) {
    if (s == "binary") return ClassGranularity::binary;
    if (s == "generator") return ClassGranularity::generator;
    throw ConfigError("unknown class granularity '" + s + "' (expected binary or generator)");
}

void ContrastiveConfig::validate() const {
    if (!(margin > 0.0) || !std::isfinite(margin)) throw ConfigError("margin must be positive");
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
}

json ContrastiveConfig::to_json() const {
    return {{"margin", margin},
            {"epochs", epochs},
            {"learning_rate", learning_rate},
            {"batch_size", batch_size},
            {"seed", seed},
            {"class_granularity", to_string(granularity)}};
}

ContrastiveConfig ContrastiveConfig::from_json(const json& j) {
    ContrastiveConfig c;
    c.margin = j.at("margin").get<double>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.granularity = granularity_from_string(j.at("class_granularity").get<std::string>());
    return c;
}

std::vector<std::size_t> desk_projection_dims(std::size_t input_dim) { return {input_dim, 1024, 512, 512}; }

std::vector<std::size_t> full_scale_projection_dims(std::size_t input_dim) {
    return {input_dim, 8192, 8192, 8192, 512};
}

std::vector<float> ProjectionNetwork::project(std::span<const float> x) const {
    if (x.size() != network.input_dim())
        throw DimensionError("project: input width " + std::to_string(x.size()) + ", expected " +
                             std::to_string(network.input_dim()));
    DenseNetwork<float>::Matrix batch(1, static_cast<Eigen::Index>(x.size()));
    std::copy(x.begin(), x.end(), batch.data());
    const auto z = network.output(batch);
    return {z.data(), z.data() + z.size()};
}

std::vector<std::vector<float>> ProjectionNetwork::project_all(const std::vector<std::vector<float>>& xs) const {
    std::vector<std::vector<float>> out;
    out.reserve(xs.size());
    for (const auto& x : xs) out.push_back(project(x));
    return out;
}

ProjectionNetwork projection_init(const std::vector<std::size_t>& layer_dims, std::uint64_t seed,
                                  bool allow_nonstandard) {
    if (layer_dims.size() < 2) throw ConfigError("projection needs at least input and output widths");
    if (!allow_nonstandard && layer_dims.back() != kProjectionWidth)
        throw ConfigError("projection output width must be 512, got " + std::to_string(layer_dims.back()));
    ProjectionNetwork p;
    p.network = DenseNetwork<float>::he_uniform(layer_dims, seed);
    p.seed = seed;
    p.config.seed = seed;
    return p;
}

int pair_label(const std::string& label_i, const std::string& label_j) {
    return (label_i == kHumanLabel) == (label_j == kHumanLabel) ? 1 : 0;
}

std::vector<TripletIndex> sample_triplet_indices(const std::vector<std::string>& labels, std::size_t epoch,
                                                 const ContrastiveConfig& config) {
    auto class_of = [&](const std::string& label) {
        if (config.granularity == ClassGranularity::generator) return label;
        return label == kHumanLabel ? std::string(kHumanLabel) : std::string("machine");
    };
    std::map<std::string, std::vector<std::size_t>> members;
    std::vector<std::string> classes(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        classes[i] = class_of(labels[i]);
        members[classes[i]].push_back(i);
    }
    if (members.size() < 2) throw SamplingError("triplet sampling needs at least two classes");
    for (const auto& [name, list] : members)
        if (list.size() < 2) throw SamplingError("class '" + name + "' has a single member; no positive exists");

    Pcg32 rng(config.seed, epoch);
    std::vector<TripletIndex> out;
    out.reserve(labels.size());
    for (std::size_t a = 0; a < labels.size(); ++a) {
        const auto& same = members[classes[a]];
        // Uniform over the class without the anchor: draw from size-1 slots and skip past it.
        std::size_t pick = rng.bounded(static_cast<std::uint32_t>(same.size() - 1));
        const auto anchor_slot = static_cast<std::size_t>(std::lower_bound(same.begin(), same.end(), a) - same.begin());
        if (pick >= anchor_slot) ++pick;
        const std::size_t positive = same[pick];

        const std::size_t others = labels.size() - same.size();
        std::size_t k = rng.bounded(static_cast<std::uint32_t>(others));
        std::size_t negative = 0;
        for (const auto& [name, list] : members) {
            if (name == classes[a]) continue;
            if (k < list.size()) {
                negative = list[k];
                break;
            }
            k -= list.size();
        }
        out.push_back({a, positive, negative});
    }
    return out;
}

std::vector<Triplet> sample_triplets(const EmbeddingSet& set, std::size_t epoch, const ContrastiveConfig& config) {
    std::vector<std::string> labels;
    for (const auto& r : set.records()) labels.push_back(r.label);
    std::vector<Triplet> out;
    for (const auto& t : sample_triplet_indices(labels, epoch, config))
        out.push_back({set[t.anchor].id, set[t.positive].id, set[t.negative].id});
    return out;
}

template <typename T>
double triplet_loss(std::span<const T> anchor, std::span<const T> positive, std::span<const T> negative,
                    double margin) {
    if (!(margin > 0.0)) throw DomainError("triplet_loss: margin must be positive");
    const double d_ap = euclidean_distance(anchor, positive);
    const double d_an = euclidean_distance(anchor, negative);
    return std::max(0.0, d_ap - d_an + margin);
}

template double triplet_loss<float>(std::span<const float>, std::span<const float>, std::span<const float>, double);
template double triplet_loss<double>(std::span<const double>, std::span<const double>, std::span<const double>,
                                     double);

double triplet_loss(const std::vector<float>& anchor, const std::vector<float>& positive,
                    const std::vector<float>& negative, double margin) {
    return triplet_loss<float>(anchor, positive, negative, margin);
}

template <typename T>
TripletLossGradients<T> triplet_backward(const DenseNetwork<T>& net, const typename DenseNetwork<T>::Matrix& anchors,
                                         const typename DenseNetwork<T>::Matrix& positives,
                                         const typename DenseNetwork<T>::Matrix& negatives, double margin) {
    using Matrix = typename DenseNetwork<T>::Matrix;
    const auto B = anchors.rows();
    if (B == 0 || positives.rows() != B || negatives.rows() != B)
        throw DimensionError("triplet_backward: anchor/positive/negative batches must be non-empty and equal");
    Matrix stacked(3 * B, anchors.cols());
    stacked << anchors, positives, negatives;
    const auto trace = net.forward(stacked);
    const Matrix& z = trace.activations.back();

    Matrix grad = Matrix::Zero(z.rows(), z.cols());
    double loss = 0.0;
    const T scale = T(1) / static_cast<T>(B);
    for (Eigen::Index i = 0; i < B; ++i) {
        const auto za = z.row(i), zp = z.row(B + i), zn = z.row(2 * B + i);
        const auto diff_p = (za - zp).eval();
        const auto diff_n = (za - zn).eval();
        const double d_ap = std::sqrt(static_cast<double>(diff_p.squaredNorm()));
        const double d_an = std::sqrt(static_cast<double>(diff_n.squaredNorm()));
        const double hinge = d_ap - d_an + margin;
        if (hinge <= 0.0) continue;
        loss += hinge;
        if (d_ap > 0.0) {
            const auto u = (diff_p * (scale / static_cast<T>(d_ap))).eval();
            grad.row(i) += u;
            grad.row(B + i) -= u;
        }
        if (d_an > 0.0) {
            const auto v = (diff_n * (scale / static_cast<T>(d_an))).eval();
            grad.row(i) -= v;
            grad.row(2 * B + i) += v;
        }
    }
    TripletLossGradients<T> out;
    out.loss = loss / static_cast<double>(B);
    out.gradients = net.backward(trace, grad);
    return out;
}

template TripletLossGradients<float> triplet_backward<float>(const DenseNetwork<float>&,
                                                             const DenseNetwork<float>::Matrix&,
                                                             const DenseNetwork<float>::Matrix&,
                                                             const DenseNetwork<float>::Matrix&, double);
template TripletLossGradients<double> triplet_backward<double>(const DenseNetwork<double>&,
                                                               const DenseNetwork<double>::Matrix&,
                                                               const DenseNetwork<double>::Matrix&,
                                                               const DenseNetwork<double>::Matrix&, double);

json ContrastiveLog::to_json() const {
    json rows = json::array();
    for (const auto& e : epochs)
        rows.push_back({{"epoch", e.epoch},
                        {"train_loss", e.train_loss},
                        {"val_loss", e.val_loss ? json(*e.val_loss) : json(nullptr)}});
    return {{"epochs", rows}};
}

namespace {

struct Batcher {
    const EmbeddingSet& set;

    DenseNetwork<float>::Matrix rows(const std::vector<TripletIndex>& triplets, std::size_t begin, std::size_t end,
                                     std::size_t TripletIndex::*leg) const {
        DenseNetwork<float>::Matrix m(static_cast<Eigen::Index>(end - begin), static_cast<Eigen::Index>(set.dim()));
        for (std::size_t i = begin; i < end; ++i) {
            const auto& v = set[triplets[i].*leg].vector;
            std::copy(v.begin(), v.end(), m.row(static_cast<Eigen::Index>(i - begin)).data());
        }
        return m;
    }
};

std::vector<std::string> labels_of(const EmbeddingSet& set) {
    std::vector<std::string> labels;
    labels.reserve(set.size());
    for (const auto& r : set.records()) labels.push_back(r.label);
    return labels;
}

}  // namespace

ProjectionTrainResult train_projection(const EmbeddingSet& train, const EmbeddingSet& val,
                                       const ContrastiveConfig& config, std::vector<std::size_t> layer_dims,
                                       bool allow_nonstandard) {
    config.validate();
    if (train.empty()) throw DataError("train_projection: empty training set");
    if (!val.empty() && val.dim() != train.dim()) throw DimensionError("train_projection: val width differs");
    if (layer_dims.empty()) layer_dims = desk_projection_dims(train.dim());
    if (layer_dims.front() != train.dim())
        throw ConfigError("train_projection: layer_dims input width does not match embeddings");

    ProjectionNetwork projection = projection_init(layer_dims, config.seed, allow_nonstandard);
    projection.margin = config.margin;
    projection.config = config;
    AdamOptimizer<float> adam(projection.network);
    const auto lr = static_cast<float>(config.learning_rate);
    const auto train_labels = labels_of(train);
    const auto val_labels = labels_of(val);
    const Batcher train_rows{train};
    const Batcher val_rows{val};

    ProjectionTrainResult result;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        auto triplets = sample_triplet_indices(train_labels, epoch, config);
        Pcg32 shuffler(config.seed, (std::uint64_t{1} << 63u) | epoch);
        shuffler.shuffle(std::span<TripletIndex>(triplets));

        double loss_sum = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < triplets.size(); start += config.batch_size, ++batch_index) {
            const std::size_t end = std::min(triplets.size(), start + config.batch_size);
            auto step = triplet_backward<float>(projection.network,
                                                train_rows.rows(triplets, start, end, &TripletIndex::anchor),
                                                train_rows.rows(triplets, start, end, &TripletIndex::positive),
                                                train_rows.rows(triplets, start, end, &TripletIndex::negative),
                                                config.margin);
            if (!std::isfinite(step.loss))
                throw NumericError("train_projection: non-finite loss at epoch " + std::to_string(epoch) +
                                   ", batch " + std::to_string(batch_index));
            loss_sum += step.loss * static_cast<double>(end - start);
            adam.step(projection.network, step.gradients, lr);
        }

        ContrastiveEpochLog entry{epoch, loss_sum / static_cast<double>(triplets.size()), std::nullopt};
        if (!val.empty()) {
            const auto val_triplets = sample_triplet_indices(val_labels, epoch, config);
            double val_sum = 0.0;
            for (std::size_t start = 0; start < val_triplets.size(); start += 256) {
                const std::size_t end = std::min(val_triplets.size(), start + 256);
                const auto za = projection.network.output(val_rows.rows(val_triplets, start, end, &TripletIndex::anchor));
                const auto zp = projection.network.output(val_rows.rows(val_triplets, start, end, &TripletIndex::positive));
                const auto zn = projection.network.output(val_rows.rows(val_triplets, start, end, &TripletIndex::negative));
                for (Eigen::Index r = 0; r < za.rows(); ++r) {
                    const double d_ap = (za.row(r) - zp.row(r)).template cast<double>().norm();
                    const double d_an = (za.row(r) - zn.row(r)).template cast<double>().norm();
                    val_sum += std::max(0.0, d_ap - d_an + config.margin);
                }
            }
            entry.val_loss = val_sum / static_cast<double>(val_triplets.size());
        }
        result.log.epochs.push_back(entry);
    }
    result.projection = std::move(projection);
    return result;
}

KnnModel fit_projected_knn(const ProjectionNetwork& projection, const EmbeddingSet& train, std::size_t k) {
    std::vector<std::vector<float>> xs;
    xs.reserve(train.size());
    for (const auto& r : train.records()) xs.push_back(r.vector);
    const auto zs = projection.project_all(xs);
    std::vector<EmbeddingRecord> points;
    points.reserve(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
        EmbeddingRecord p = train[i];
        p.encoder = train.encoder() + "+cproj";
        p.vector = zs[i];
        points.push_back(std::move(p));
    }
    return KnnModel::fit(std::move(points), k);
}

KnnPrediction project_and_classify(const ProjectionNetwork& projection, const KnnModel& projected_knn,
                                   std::span<const float> query) {
    return projected_knn.predict(projection.project(query));
}

json projection_to_json(const ProjectionNetwork& p) {
    return {{"format", kProjectionFormat},
            {"layer_dims", p.network.dims()},
            {"margin", p.margin},
            {"seed", p.seed},
            {"contrastive_config", p.config.to_json()},
            {"layers", layers_to_json(p.network)}};
}

ProjectionNetwork projection_from_json(const json& j) {
    try {
        if (j.value("format", "") != kProjectionFormat)
            throw FormatError("not a " + std::string(kProjectionFormat) + " artifact");
        ProjectionNetwork p;
        p.network = layers_from_json(j.at("layer_dims").get<std::vector<std::size_t>>(), j.at("layers"));
        p.margin = j.at("margin").get<double>();
        p.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("contrastive_config")) p.config = ContrastiveConfig::from_json(j.at("contrastive_config"));
        return p;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed projection artifact: ") + e.what());
    }
}

std::string serialize_projection(const ProjectionNetwork& projection) {
    return projection_to_json(projection).dump() + "\n";
}

void save_projection(const ProjectionNetwork& projection, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_projection(projection));
}

ProjectionNetwork load_projection(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw FormatError("malformed projection artifact " + path.string() + ": " + e.what());
    }
    return projection_from_json(j);
}

}  // namespace llmcipher
