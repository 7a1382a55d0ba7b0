#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "llmcipher/embedding_store.hpp"

namespace llmcipher {

inline constexpr const char* kKnnFormat = "llmcipher-knn-v1";

struct Neighbor {
    std::string id;
    std::string label;
    double distance = 0.0;
};

struct KnnPrediction {
    std::string label;
    std::vector<Neighbor> neighbors;  // ascending by (distance, id)
};

/// Euclidean k-nearest-neighbour classifier over stored, unnormalised points.
///
/// Exactly k neighbours vote: candidates are ordered by (distance, id), so
/// equidistant points at the k-th rank are admitted by id. Vote ties go to
/// the label with the smallest summed neighbour distance, then to the
/// lexicographically smallest label.
class KnnModel {
public:
    static KnnModel fit(std::vector<EmbeddingRecord> points, std::size_t k);

    std::size_t k() const noexcept { return k_; }
    std::size_t dim() const noexcept { return dim_; }
    const std::vector<EmbeddingRecord>& points() const noexcept { return points_; }

    KnnPrediction predict(std::span<const float> query) const;

    bool operator==(const KnnModel&) const = default;

private:
    std::size_t k_ = 0;
    std::size_t dim_ = 0;
    std::vector<EmbeddingRecord> points_;
};

KnnModel knn_fit(const EmbeddingSet& train, std::size_t k = 5);
KnnModel knn_fit(std::vector<EmbeddingRecord> train, std::size_t k = 5);
KnnPrediction knn_predict(const KnnModel& model, std::span<const float> query);

/// Header line `{"format":"llmcipher-knn-v1","k":K}` followed by interchange records.
void save_knn(const KnnModel& model, const std::filesystem::path& path);
std::string serialize_knn(const KnnModel& model);
KnnModel load_knn(const std::filesystem::path& path);

}  // namespace llmcipher
