#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "llmcipher/embedding_store.hpp"
#include "llmcipher/prng.hpp"

namespace llmcipher::testing {

/// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
        path_ = std::filesystem::temp_directory_path() /
                ("llmcipher-test-" + std::to_string(stamp) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline EmbeddingRecord make_record(std::string id, std::string label, std::string domain, std::vector<float> vector,
                                   std::optional<std::string> pair_id = std::nullopt, std::string encoder = "toy") {
    return EmbeddingRecord{std::move(id), std::move(label), std::move(domain),
                           std::move(pair_id), std::move(encoder), std::move(vector)};
}

inline std::vector<float> random_vector(Pcg32& rng, std::size_t dim, double scale = 1.0) {
    std::vector<float> v(dim);
    for (auto& x : v) x = static_cast<float>(scale * rng.normal());
    return v;
}

/// Unit-variance Gaussian clusters; class c is centred at `separation` along axis c.
/// Records in `shifted_domain` are moved by `domain_shift` along the last axis.
struct ClusterSpec {
    std::vector<std::string> labels{"human", "gen_a", "gen_b"};
    std::vector<std::string> domains{"news", "wiki"};
    std::size_t dim = 16;
    double separation = 10.0;
    std::string shifted_domain;
    double domain_shift = 0.0;
};

inline std::vector<float> cluster_point(Pcg32& rng, const ClusterSpec& spec, std::size_t label_index,
                                        const std::string& domain) {
    auto v = random_vector(rng, spec.dim);
    v[label_index] += static_cast<float>(spec.separation);
    if (!spec.shifted_domain.empty() && domain == spec.shifted_domain)
        v[spec.dim - 1] += static_cast<float>(spec.domain_shift);
    return v;
}

/// `count` records cycling through labels and domains, ids `<prefix>0000`...
inline EmbeddingSet make_clusters(const ClusterSpec& spec, std::size_t count, std::uint64_t seed,
                                  const std::string& prefix) {
    Pcg32 rng(seed, 7);
    std::vector<EmbeddingRecord> records;
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t li = i % spec.labels.size();
        const auto& domain = spec.domains[(i / spec.labels.size()) % spec.domains.size()];
        char id[32];
        std::snprintf(id, sizeof id, "%s%04zu", prefix.c_str(), i);
        records.push_back(make_record(id, spec.labels[li], domain, cluster_point(rng, spec, li, domain)));
    }
    return EmbeddingSet::from_records(std::move(records));
}

/// Synonym groups for the perturbation fixtures: the first word of each group
/// is common in the corpus, the others are rare near-duplicates in embedding space.
inline const std::vector<std::vector<std::string>>& synonym_groups() {
    static const std::vector<std::vector<std::string>> groups = {
        {"big", "large", "huge"},           {"quick", "rapid", "swift"},
        {"happy", "glad", "joyful"},        {"house", "home", "dwelling"},
        {"said", "stated", "remarked"},     {"small", "little", "tiny"},
        {"road", "street", "avenue"},       {"city", "town", "metropolis"},
        {"begin", "start", "commence"},     {"answer", "reply", "response"},
        {"smart", "clever", "bright"},      {"walked", "strolled", "wandered"},
    };
    return groups;
}

inline const std::vector<std::string>& filler_words() {
    static const std::vector<std::string> words = {"the", "a", "of", "and", "to", "in", "was", "is", "on", "with"};
    return words;
}

/// `word v1 .. v8` rows; group members sit within a small angle of each other.
inline std::string synonym_table_text() {
    std::string out = "# toy word vectors\n";
    Pcg32 rng(11, 3);
    const auto& groups = synonym_groups();
    for (std::size_t g = 0; g < groups.size(); ++g) {
        for (std::size_t m = 0; m < groups[g].size(); ++m) {
            out += groups[g][m];
            for (std::size_t d = 0; d < 16; ++d) {
                double v = (d == g ? 1.0 : 0.0) + 0.15 * rng.normal();
                out += " " + std::to_string(v);
            }
            out += "\n";
        }
    }
    for (const auto& w : filler_words()) {
        out += w;
        for (std::size_t d = 0; d < 16; ++d) out += " " + std::to_string(d == 12 + (w.size() % 4) ? 1.0 : 0.05);
        out += "\n";
    }
    return out;
}

/// Corpus in which group heads and fillers are frequent and alternates rare.
inline std::string perturbation_corpus_text() {
    Pcg32 rng(5, 9);
    const auto& groups = synonym_groups();
    const auto& fillers = filler_words();
    std::string out;
    for (int s = 0; s < 400; ++s) {
        for (int w = 0; w < 12; ++w) {
            const bool content = rng.bounded(2) == 0;
            if (content) {
                const auto& g = groups[rng.bounded(static_cast<std::uint32_t>(groups.size()))];
                out += (rng.bounded(20) == 0 ? g[1 + rng.bounded(static_cast<std::uint32_t>(g.size() - 1))] : g[0]);
            } else {
                out += fillers[rng.bounded(static_cast<std::uint32_t>(fillers.size()))];
            }
            out += ' ';
        }
        out += ".\n";
    }
    return out;
}

/// `count` short texts mixing group heads, fillers, punctuation and capitals.
inline std::vector<std::string> perturbation_texts(std::size_t count, std::uint64_t seed = 42) {
    Pcg32 rng(seed, 4);
    const auto& groups = synonym_groups();
    const auto& fillers = filler_words();
    std::vector<std::string> texts;
    for (std::size_t t = 0; t < count; ++t) {
        const std::size_t length = 5 + rng.bounded(30);
        std::string text;
        for (std::size_t w = 0; w < length; ++w) {
            std::string word = rng.bounded(2) == 0
                                   ? groups[rng.bounded(static_cast<std::uint32_t>(groups.size()))][0]
                                   : fillers[rng.bounded(static_cast<std::uint32_t>(fillers.size()))];
            if (w == 0) word[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(word[0])));
            if (rng.bounded(8) == 0) word += ",";
            if (w > 0) text += rng.bounded(10) == 0 ? "  " : " ";
            text += word;
        }
        texts.push_back(text + ".");
    }
    return texts;
}

}  // namespace llmcipher::testing
