#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace llmcipher {

inline constexpr const char* kEmbeddingFormat = "llmcipher-emb-v1";
inline constexpr const char* kHumanLabel = "human";

/// One text's encoder embedding plus provenance.
struct EmbeddingRecord {
    std::string id;
    std::string label;   // "human" or a generator id
    std::string domain;
    std::optional<std::string> pair_id;
    std::string encoder;
    std::vector<float> vector;

    bool is_human() const { return label == kHumanLabel; }
    bool operator==(const EmbeddingRecord&) const = default;
};

/// Validated, immutable collection of records sharing one encoder and width.
class EmbeddingSet {
public:
    EmbeddingSet() = default;

    /// Validates the set-wide invariants (shared dim and encoder, finite
    /// coordinates, unique non-empty ids, non-empty labels).
    static EmbeddingSet from_records(std::vector<EmbeddingRecord> records);

    std::size_t dim() const noexcept { return dim_; }
    const std::string& encoder() const noexcept { return encoder_; }
    const std::vector<EmbeddingRecord>& records() const noexcept { return records_; }
    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }
    const EmbeddingRecord& operator[](std::size_t i) const { return records_[i]; }

    /// Sorted unique labels / domains.
    std::vector<std::string> labels() const;
    std::vector<std::string> domains() const;

    /// Records whose id is in `ids`, preserving set order.
    EmbeddingSet subset(const std::vector<std::string>& ids) const;
    EmbeddingSet filter(const std::function<bool(const EmbeddingRecord&)>& keep) const;

    bool operator==(const EmbeddingSet&) const = default;

private:
    std::size_t dim_ = 0;
    std::string encoder_;
    std::vector<EmbeddingRecord> records_;
};

// Interchange I/O ----------------------------------------------------------

EmbeddingSet load_embeddings(const std::filesystem::path& path);
EmbeddingSet parse_embeddings(std::istream& in, std::size_t first_line_number = 1);

/// Parses one interchange line. `line_number` is used in error messages.
EmbeddingRecord parse_embedding_line(const std::string& line, std::size_t line_number);
std::string format_embedding_line(const EmbeddingRecord& record);

void write_embeddings(const EmbeddingSet& set, std::ostream& out);
void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path);

/// `<dir>/<stem>.meta.json` for an interchange file at `path`.
std::filesystem::path manifest_path_for(const std::filesystem::path& path);
nlohmann::json make_manifest(const EmbeddingSet& set);

// Splitting -----------------------------------------------------------------

enum class Partition { train, val, test, excluded };

const char* to_string(Partition p);
Partition partition_from_string(const std::string& s);

struct SplitSpec {
    std::uint64_t seed = 42;
    std::array<double, 3> fractions{0.8, 0.1, 0.1};  // train, val, test
    bool stratify_label = true;
    bool stratify_domain = false;
    /// Records for which this returns true never land in train or val.
    std::function<bool(const std::string& label, const std::string& domain)> exclude_from_train;
    /// Human/machine records sharing a pair_id are assigned as one unit.
    bool keep_pairs_together = true;

    void validate() const;
};

struct SplitAssignment {
    std::map<std::string, Partition> assignment;
    std::vector<std::string> warnings;

    std::vector<std::string> ids(Partition p) const;
    std::size_t count(Partition p) const;
};

SplitAssignment make_split(const EmbeddingSet& set, const SplitSpec& spec);

// Pairing -------------------------------------------------------------------

struct TextPair {
    std::string human_id;
    std::string machine_id;
    auto operator<=>(const TextPair&) const = default;
};

/// Every human/machine pair sharing a pair_id, sorted by (human, machine) id.
std::vector<TextPair> pair_index(const EmbeddingSet& set);

}  // namespace llmcipher
