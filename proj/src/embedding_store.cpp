#include "llmcipher/embedding_store.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "llmcipher/base64.hpp"
#include "llmcipher/errors.hpp"
#include "llmcipher/io.hpp"
#include "llmcipher/prng.hpp"

namespace llmcipher {

using nlohmann::json;

namespace {

/// Incremental set-level validation; the first record fixes dim and encoder.
class RecordValidator {
public:
    void check(const EmbeddingRecord& r, const std::string& where) {
        if (r.id.empty()) throw DataError(where + ": empty id");
        if (r.label.empty()) throw DataError(where + ": empty label");
        if (r.vector.empty()) throw FormatError(where + ": empty vector");
        if (!started_) {
            dim_ = r.vector.size();
            encoder_ = r.encoder;
            started_ = true;
        }
        if (r.vector.size() != dim_)
            throw FormatError(where + ": dimension mismatch: expected " + std::to_string(dim_) + ", got " +
                              std::to_string(r.vector.size()));
        if (r.encoder != encoder_)
            throw FormatError(where + ": encoder '" + r.encoder + "' differs from set encoder '" + encoder_ + "'");
        for (std::size_t j = 0; j < r.vector.size(); ++j)
            if (!std::isfinite(r.vector[j]))
                throw DataError(where + ": non-finite coordinate at index " + std::to_string(j));
        if (!seen_.insert(r.id).second) throw DataError(where + ": duplicate id '" + r.id + "'");
    }

private:
    bool started_ = false;
    std::size_t dim_ = 0;
    std::string encoder_;
    std::unordered_set<std::string> seen_;
};

const json& require(const json& obj, const char* key, std::size_t line) {
    const auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(std::string("missing key '") + key + "'", line);
    return *it;
}

std::string require_string(const json& obj, const char* key, std::size_t line) {
    const auto& v = require(obj, key, line);
    if (!v.is_string()) throw ParseError(std::string("key '") + key + "' must be a string", line);
    return v.get<std::string>();
}

}  // namespace

EmbeddingSet EmbeddingSet::from_records(std::vector<EmbeddingRecord> records) {
    RecordValidator validator;
    for (std::size_t i = 0; i < records.size(); ++i) validator.check(records[i], "record " + std::to_string(i));
    EmbeddingSet set;
    if (!records.empty()) {
        set.dim_ = records.front().vector.size();
        set.encoder_ = records.front().encoder;
    }
    set.records_ = std::move(records);
    return set;
}

std::vector<std::string> EmbeddingSet::labels() const {
    std::set<std::string> out;
    for (const auto& r : records_) out.insert(r.label);
    return {out.begin(), out.end()};
}

std::vector<std::string> EmbeddingSet::domains() const {
    std::set<std::string> out;
    for (const auto& r : records_) out.insert(r.domain);
    return {out.begin(), out.end()};
}

EmbeddingSet EmbeddingSet::subset(const std::vector<std::string>& ids) const {
    const std::unordered_set<std::string> wanted(ids.begin(), ids.end());
    return filter([&](const EmbeddingRecord& r) { return wanted.contains(r.id); });
}

EmbeddingSet EmbeddingSet::filter(const std::function<bool(const EmbeddingRecord&)>& keep) const {
    EmbeddingSet out;
    out.dim_ = dim_;
    out.encoder_ = encoder_;
    for (const auto& r : records_)
        if (keep(r)) out.records_.push_back(r);
    return out;
}

EmbeddingRecord parse_embedding_line(const std::string& line, std::size_t line_number) {
    json obj;
    try {
        obj = json::parse(line);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("malformed JSON: ") + e.what(), line_number);
    }
    if (!obj.is_object()) throw ParseError("record is not a JSON object", line_number);

    EmbeddingRecord r;
    r.id = require_string(obj, "id", line_number);
    r.label = require_string(obj, "label", line_number);
    r.domain = require_string(obj, "domain", line_number);
    r.encoder = require_string(obj, "encoder", line_number);
    const auto& pair = require(obj, "pair_id", line_number);
    if (pair.is_string())
        r.pair_id = pair.get<std::string>();
    else if (!pair.is_null())
        throw ParseError("key 'pair_id' must be a string or null", line_number);

    const auto& dim = require(obj, "dim", line_number);
    if (!dim.is_number_unsigned() || dim.get<std::uint64_t>() == 0)
        throw ParseError("key 'dim' must be a positive integer", line_number);
    const std::string payload = require_string(obj, "vector_b64", line_number);
    try {
        r.vector = base64::decode_f32(payload);
    } catch (const FormatError& e) {
        throw ParseError(std::string("vector_b64: ") + e.what(), line_number);
    }
    if (r.vector.size() != dim.get<std::uint64_t>())
        throw FormatError("line " + std::to_string(line_number) + ": dimension mismatch: dim field says " +
                          std::to_string(dim.get<std::uint64_t>()) + " but payload holds " +
                          std::to_string(r.vector.size()) + " floats");
    return r;
}

std::string format_embedding_line(const EmbeddingRecord& r) {
    json obj = {
        {"id", r.id},
        {"label", r.label},
        {"domain", r.domain},
        {"pair_id", r.pair_id ? json(*r.pair_id) : json(nullptr)},
        {"encoder", r.encoder},
        {"dim", r.vector.size()},
        {"vector_b64", base64::encode_f32(r.vector)},
    };
    return obj.dump();
}

EmbeddingSet parse_embeddings(std::istream& in, std::size_t first_line_number) {
    std::vector<EmbeddingRecord> records;
    RecordValidator validator;
    std::string line;
    std::size_t line_number = first_line_number - 1;
    while (std::getline(in, line)) {
        ++line_number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        auto record = parse_embedding_line(line, line_number);
        validator.check(record, "line " + std::to_string(line_number));
        records.push_back(std::move(record));
    }
    return EmbeddingSet::from_records(std::move(records));
}

EmbeddingSet load_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open embedding file: " + path.string());
    return parse_embeddings(in);
}

void write_embeddings(const EmbeddingSet& set, std::ostream& out) {
    for (const auto& r : set.records()) out << format_embedding_line(r) << '\n';
}

void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path) {
    std::ostringstream buffer;
    write_embeddings(set, buffer);
    write_file_atomic(path, buffer.str());
}

std::filesystem::path manifest_path_for(const std::filesystem::path& path) {
    auto out = path.parent_path() / path.stem();
    out += ".meta.json";
    return out;
}

json make_manifest(const EmbeddingSet& set) {
    return {
        {"format", kEmbeddingFormat},
        {"encoder", set.encoder()},
        {"dim", set.dim()},
        {"count", set.size()},
        {"labels", set.labels()},
        {"domains", set.domains()},
    };
}

// ---------------------------------------------------------------------------

const char* to_string(Partition p) {
    switch (p) {
        case Partition::train: return "train";
        case Partition::val: return "val";
        case Partition::test: return "test";
        case Partition::excluded: return "excluded";
    }
    return "?";
}

Partition partition_from_string(const std::string& s) {
    if (s == "train") return Partition::train;
    if (s == "val") return Partition::val;
    if (s == "test") return Partition::test;
    if (s == "excluded") return Partition::excluded;
    throw FormatError("unknown partition '" + s + "'");
}

void SplitSpec::validate() const {
    double sum = 0.0;
    for (const double f : fractions) {
        if (!(f >= 0.0) || !std::isfinite(f)) throw ConfigError("split fractions must be non-negative");
        sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
}

std::vector<std::string> SplitAssignment::ids(Partition p) const {
    std::vector<std::string> out;
    for (const auto& [id, part] : assignment)
        if (part == p) out.push_back(id);
    return out;
}

std::size_t SplitAssignment::count(Partition p) const {
    return static_cast<std::size_t>(
        std::count_if(assignment.begin(), assignment.end(), [p](const auto& kv) { return kv.second == p; }));
}

SplitAssignment make_split(const EmbeddingSet& set, const SplitSpec& spec) {
    spec.validate();
    if (set.empty()) throw DataError("make_split: empty embedding set");

    // Units are single records, or whole pair groups when pairs stay together.
    // Each unit is keyed by its smallest id so the result depends only on set contents.
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < set.size(); ++i) {
        const auto& r = set[i];
        const std::string key = (spec.keep_pairs_together && r.pair_id) ? "p\x1f" + *r.pair_id : "r\x1f" + r.id;
        groups[key].push_back(i);
    }

    struct Unit {
        std::string order_key;
        std::vector<std::size_t> members;
    };
    auto stratum_of = [&](const EmbeddingRecord& r) {
        std::string key;
        if (spec.stratify_label) key += r.label;
        key += '\x1f';
        if (spec.stratify_domain) key += r.domain;
        return key;
    };

    SplitAssignment out;
    std::map<std::string, std::vector<Unit>> strata;
    for (auto& [_, members] : groups) {
        std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) { return set[a].id < set[b].id; });
        bool excluded = false;
        if (spec.exclude_from_train)
            for (const std::size_t m : members)
                excluded = excluded || spec.exclude_from_train(set[m].label, set[m].domain);
        if (excluded) {
            for (const std::size_t m : members) out.assignment[set[m].id] = Partition::excluded;
            continue;
        }
        // A pair group is stratified by its machine member.
        std::size_t representative = members.front();
        for (const std::size_t m : members)
            if (!set[m].is_human()) {
                representative = m;
                break;
            }
        strata[stratum_of(set[representative])].push_back(Unit{set[members.front()].id, members});
    }

    const auto& fr = spec.fractions;
    const int nonzero = static_cast<int>(std::count_if(fr.begin(), fr.end(), [](double f) { return f > 0.0; }));
    std::uint64_t stratum_index = 0;
    for (auto& [key, units] : strata) {
        std::sort(units.begin(), units.end(), [](const Unit& a, const Unit& b) { return a.order_key < b.order_key; });
        Pcg32 rng(spec.seed, stratum_index++);
        rng.shuffle(std::span<Unit>(units));

        const std::size_t n = units.size();
        std::size_t n_val = 0, n_test = 0;
        if (nonzero == 3 && n < 3) {
            out.warnings.push_back("stratum '" + key + "' has " + std::to_string(n) +
                                   " unit(s); assigned to train");
        } else {
            n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * fr[1] + 1e-9));
            n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * fr[2] + 1e-9));
        }
        const std::size_t n_train = n - n_val - n_test;
        for (std::size_t i = 0; i < n; ++i) {
            const Partition p = i < n_train ? Partition::train : (i < n_train + n_val ? Partition::val : Partition::test);
            for (const std::size_t m : units[i].members) out.assignment[set[m].id] = p;
        }
    }
    return out;
}

std::vector<TextPair> pair_index(const EmbeddingSet& set) {
    std::map<std::string, std::vector<const EmbeddingRecord*>> by_pair;
    for (const auto& r : set.records())
        if (r.pair_id) by_pair[*r.pair_id].push_back(&r);

    std::vector<TextPair> out;
    for (const auto& [pair_id, members] : by_pair) {
        if (members.size() < 2) continue;
        const auto humans = std::count_if(members.begin(), members.end(), [](auto* r) { return r->is_human(); });
        if (members.size() > 2 || humans != 1) {
            std::vector<std::string> ids;
            for (auto* r : members) ids.push_back(r->id);
            std::sort(ids.begin(), ids.end());
            std::string listed;
            for (const auto& id : ids) listed += (listed.empty() ? "" : ", ") + id;
            throw DataError("pair_id '" + pair_id + "' does not link exactly one human and one machine record: " +
                            listed);
        }
        const auto* h = members[0]->is_human() ? members[0] : members[1];
        const auto* m = members[0]->is_human() ? members[1] : members[0];
        out.push_back({h->id, m->id});
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace llmcipher
