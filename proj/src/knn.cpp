#include "llmcipher/knn.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "llmcipher/errors.hpp"
#include "llmcipher/io.hpp"
#include "llmcipher/numerics.hpp"

namespace llmcipher {

using nlohmann::json;

KnnModel KnnModel::fit(std::vector<EmbeddingRecord> points, std::size_t k) {
    if (points.empty()) throw ConfigError("knn_fit: empty training set");
    if (k == 0) throw ConfigError("knn_fit: k must be positive");
    if (k > points.size())
        throw ConfigError("knn_fit: k=" + std::to_string(k) + " exceeds " + std::to_string(points.size()) +
                          " training points");
    const std::size_t dim = points.front().vector.size();
    std::unordered_set<std::string> ids;
    for (const auto& p : points) {
        if (p.vector.size() != dim)
            throw DimensionError("knn_fit: point '" + p.id + "' has width " + std::to_string(p.vector.size()) +
                                 ", expected " + std::to_string(dim));
        if (!ids.insert(p.id).second) throw DataError("knn_fit: duplicate point id '" + p.id + "'");
    }
    KnnModel model;
    model.k_ = k;
    model.dim_ = dim;
    model.points_ = std::move(points);
    return model;
}

KnnPrediction KnnModel::predict(std::span<const float> query) const {
    if (query.size() != dim_)
        throw DimensionError("knn_predict: query width " + std::to_string(query.size()) + ", expected " +
                             std::to_string(dim_));
    std::vector<double> dist(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i)
        dist[i] = euclidean_distance(std::span<const float>(points_[i].vector), query);

    std::vector<std::size_t> order(points_.size());
    std::iota(order.begin(), order.end(), 0);
    auto closer = [&](std::size_t a, std::size_t b) {
        if (dist[a] != dist[b]) return dist[a] < dist[b];
        return points_[a].id < points_[b].id;
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k_), order.end(), closer);

    KnnPrediction out;
    struct Tally {
        std::size_t votes = 0;
        double distance_sum = 0.0;
    };
    std::map<std::string, Tally> tally;
    for (std::size_t r = 0; r < k_; ++r) {
        const auto& p = points_[order[r]];
        out.neighbors.push_back({p.id, p.label, dist[order[r]]});
        auto& t = tally[p.label];
        ++t.votes;
        t.distance_sum += dist[order[r]];
    }
    // std::map iterates labels in lexicographic order, so strict comparisons keep the smallest label.
    const Tally* best = nullptr;
    for (const auto& [label, t] : tally) {
        if (best == nullptr || t.votes > best->votes ||
            (t.votes == best->votes && t.distance_sum < best->distance_sum)) {
            best = &t;
            out.label = label;
        }
    }
    return out;
}

KnnModel knn_fit(const EmbeddingSet& train, std::size_t k) { return KnnModel::fit(train.records(), k); }

KnnModel knn_fit(std::vector<EmbeddingRecord> train, std::size_t k) { return KnnModel::fit(std::move(train), k); }

KnnPrediction knn_predict(const KnnModel& model, std::span<const float> query) { return model.predict(query); }

std::string serialize_knn(const KnnModel& model) {
    std::string out = json{{"format", kKnnFormat}, {"k", model.k()}}.dump();
    out += '\n';
    for (const auto& p : model.points()) {
        out += format_embedding_line(p);
        out += '\n';
    }
    return out;
}

void save_knn(const KnnModel& model, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_knn(model));
}

KnnModel load_knn(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open knn model: " + path.string());
    std::string header_line;
    if (!std::getline(in, header_line)) throw FormatError("knn model is empty: " + path.string());
    json header;
    try {
        header = json::parse(header_line);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("malformed knn header: ") + e.what(), 1);
    }
    if (!header.is_object() || header.value("format", "") != kKnnFormat)
        throw FormatError("not a " + std::string(kKnnFormat) + " file: " + path.string());
    if (!header.contains("k") || !header["k"].is_number_unsigned())
        throw FormatError("knn header lacks a positive integer k");
    const auto set = parse_embeddings(in, 2);
    return KnnModel::fit(set.records(), header["k"].get<std::size_t>());
}

}  // namespace llmcipher
