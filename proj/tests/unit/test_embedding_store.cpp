#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "llmcipher/base64.hpp"
#include "llmcipher/embedding_store.hpp"
#include "llmcipher/errors.hpp"
#include "llmcipher/io.hpp"
#include "support/fixtures.hpp"

using namespace llmcipher;
using testing::make_record;

namespace {

std::string line_for(const std::string& id, std::vector<float> v, const std::string& label = "human",
                     const std::string& extra = "") {
    return "{\"id\":\"" + id + "\",\"label\":\"" + label + "\",\"domain\":\"news\",\"pair_id\":null," + extra +
           "\"encoder\":\"toy\",\"dim\":" + std::to_string(v.size()) + ",\"vector_b64\":\"" + base64::encode_f32(v) +
           "\"}";
}

EmbeddingSet parse(const std::string& text) {
    std::istringstream in(text);
    return parse_embeddings(in);
}

template <typename F>
std::string error_message(F&& f) {
    try {
        f();
    } catch (const std::exception& e) {
        return e.what();
    }
    return "";
}

EmbeddingSet grid_set(std::size_t per_stratum) {
    std::vector<EmbeddingRecord> records;
    int n = 0;
    for (const std::string label : {"human", "chatgpt"})
        for (const std::string domain : {"arxiv", "reddit"})
            for (std::size_t i = 0; i < per_stratum; ++i) {
                char id[16];
                std::snprintf(id, sizeof id, "r%03d", n++);
                records.push_back(make_record(id, label, domain, {static_cast<float>(n), 0.0f}));
            }
    return EmbeddingSet::from_records(records);
}

}  // namespace

TEST_SUITE("embedding-store") {
    TEST_CASE("three well-formed records load") {
        const auto set = parse(line_for("a", {1, 2, 3, 4}) + "\n" + line_for("b", {0, 0, 0, 0}) + "\n" +
                               line_for("c", {-1, 0.5f, 2, 8}, "chatgpt") + "\n");
        CHECK(set.dim() == 4);
        CHECK(set.size() == 3);
        CHECK(set.encoder() == "toy");
        CHECK(set.labels() == std::vector<std::string>{"chatgpt", "human"});
    }

    TEST_CASE("dimension mismatch names the line") {
        const auto msg = error_message([] { parse(line_for("a", {1, 2, 3, 4}) + "\n" + line_for("b", {1, 2, 3})); });
        CHECK(msg.find("line 2") != std::string::npos);
        CHECK_THROWS_AS(parse(line_for("a", {1, 2, 3, 4}) + "\n" + line_for("b", {1, 2, 3})), FormatError);
    }

    TEST_CASE("malformed line raises a parse error with its line number") {
        try {
            parse(line_for("a", {1, 2}) + "\n{not json\n");
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.line() == 2);
        }
    }

    TEST_CASE("non-finite coordinates and duplicate ids are data errors") {
        CHECK_THROWS_AS(parse(line_for("a", {1.0f, std::numeric_limits<float>::infinity()})), DataError);
        CHECK_THROWS_AS(parse(line_for("a", {1.0f, std::nanf("")})), DataError);
        CHECK_THROWS_AS(parse(line_for("a", {1, 2}) + "\n" + line_for("a", {3, 4})), DataError);
        CHECK_THROWS_AS(parse(line_for("a", {1, 2}, "")), DataError);
    }

    TEST_CASE("dim field must match the decoded vector") {
        auto line = line_for("a", {1, 2});
        line.replace(line.find("\"dim\":2"), 7, "\"dim\":3");
        CHECK_THROWS_AS(parse(line), FormatError);
    }

    TEST_CASE("random set round-trips bit-identically") {
        testing::TempDir dir;
        Pcg32 rng(100, 1);
        std::vector<EmbeddingRecord> records;
        for (int i = 0; i < 100; ++i) {
            std::optional<std::string> pair;
            if (i % 3 == 0) pair = "p" + std::to_string(i);
            records.push_back(make_record("id" + std::to_string(i), i % 2 ? "human" : "dolly", i % 4 ? "wiki" : "arxiv",
                                          testing::random_vector(rng, 32, 1e3), pair));
        }
        const auto set = EmbeddingSet::from_records(records);
        save_embeddings(set, dir / "set.jsonl");
        const auto back = load_embeddings(dir / "set.jsonl");
        CHECK(back == set);
        for (std::size_t i = 0; i < set.size(); ++i)
            for (std::size_t j = 0; j < set.dim(); ++j)
                CHECK(std::bit_cast<std::uint32_t>(back[i].vector[j]) ==
                      std::bit_cast<std::uint32_t>(set[i].vector[j]));
        const auto bytes = read_file(dir / "set.jsonl");
        CHECK(load_embeddings(dir / "set.jsonl") == back);
        CHECK(read_file(dir / "set.jsonl") == bytes);
    }

    TEST_CASE("manifest carries counts and vocabularies") {
        const auto set = grid_set(2);
        const auto m = make_manifest(set);
        CHECK(m["format"] == "llmcipher-emb-v1");
        CHECK(m["count"] == 8);
        CHECK(m["dim"] == 2);
        CHECK(m["labels"] == nlohmann::json{"chatgpt", "human"});
        CHECK(m["domains"] == nlohmann::json{"arxiv", "reddit"});
        CHECK(manifest_path_for("/tmp/x/emb.jsonl") == std::filesystem::path("/tmp/x/emb.meta.json"));
    }

    TEST_CASE("missing file is an io error naming the path") {
        const auto msg = error_message([] { load_embeddings("/nonexistent/emb.jsonl"); });
        CHECK(msg.find("/nonexistent/emb.jsonl") != std::string::npos);
    }

    TEST_CASE("100 records split 80/10/10") {
        std::vector<EmbeddingRecord> records;
        for (int i = 0; i < 100; ++i) records.push_back(make_record("r" + std::to_string(i), "human", "d", {1.0f}));
        const auto a = make_split(EmbeddingSet::from_records(records), SplitSpec{});
        CHECK(a.count(Partition::train) == 80);
        CHECK(a.count(Partition::val) == 10);
        CHECK(a.count(Partition::test) == 10);
    }

    TEST_CASE("split is deterministic and seed changes membership only") {
        const auto set = grid_set(25);
        SplitSpec spec;
        spec.stratify_domain = true;
        const auto a = make_split(set, spec), b = make_split(set, spec);
        CHECK(a.assignment == b.assignment);
        spec.seed = 7;
        const auto c = make_split(set, spec);
        CHECK(c.assignment != a.assignment);
        for (const auto p : {Partition::train, Partition::val, Partition::test}) CHECK(c.count(p) == a.count(p));
    }

    TEST_CASE("label x domain strata of 25 obey the +-1 rule") {
        const auto set = grid_set(25);
        SplitSpec spec;
        spec.stratify_domain = true;
        const auto a = make_split(set, spec);
        std::map<std::string, std::array<int, 3>> per;
        for (const auto& r : set.records()) {
            const auto p = a.assignment.at(r.id);
            per[r.label + "/" + r.domain][static_cast<int>(p)]++;
        }
        CHECK(per.size() == 4);
        for (const auto& [stratum, counts] : per) {
            CHECK(std::abs(counts[0] - 20.0) <= 1.0 + 1e-9);
            CHECK(std::abs(counts[1] - 2.5) <= 1.0);
            CHECK(std::abs(counts[2] - 2.5) <= 1.0);
            CHECK(counts[0] + counts[1] + counts[2] == 25);
        }
    }

    TEST_CASE("partitions are disjoint and cover the set") {
        const auto set = grid_set(13);
        SplitSpec spec;
        spec.exclude_from_train = [](const std::string&, const std::string& domain) { return domain == "reddit"; };
        const auto a = make_split(set, spec);
        CHECK(a.assignment.size() == set.size());
        std::set<std::string> seen;
        for (const auto p : {Partition::train, Partition::val, Partition::test, Partition::excluded})
            for (const auto& id : a.ids(p)) CHECK(seen.insert(id).second);
        CHECK(seen.size() == set.size());
        for (const auto& r : set.records())
            if (r.domain == "reddit") CHECK(a.assignment.at(r.id) == Partition::excluded);
    }

    TEST_CASE("tiny strata warn and go to train") {
        std::vector<EmbeddingRecord> records{make_record("a", "human", "d", {1}), make_record("b", "human", "d", {2}),
                                             make_record("c", "gpt", "d", {3}), make_record("d", "gpt", "d", {4}),
                                             make_record("e", "gpt", "d", {5})};
        const auto a = make_split(EmbeddingSet::from_records(records), SplitSpec{});
        CHECK(a.warnings.size() == 1);
        CHECK(a.assignment.at("a") == Partition::train);
        CHECK(a.assignment.at("b") == Partition::train);
    }

    TEST_CASE("invalid fractions are rejected") {
        SplitSpec spec;
        spec.fractions = {0.5, 0.2, 0.2};
        CHECK_THROWS_AS(spec.validate(), ConfigError);
        CHECK_THROWS_AS(make_split(grid_set(3), spec), ConfigError);
    }

    TEST_CASE("pairs stay together in one partition") {
        std::vector<EmbeddingRecord> records;
        for (int i = 0; i < 40; ++i) {
            const std::string p = "p" + std::to_string(i);
            records.push_back(make_record("h" + std::to_string(i), "human", "d", {1}, p));
            records.push_back(make_record("m" + std::to_string(i), "chatgpt", "d", {2}, p));
        }
        const auto a = make_split(EmbeddingSet::from_records(records), SplitSpec{});
        for (int i = 0; i < 40; ++i)
            CHECK(a.assignment.at("h" + std::to_string(i)) == a.assignment.at("m" + std::to_string(i)));
    }

    TEST_CASE("pair index examples") {
        auto one = EmbeddingSet::from_records(
            {make_record("h1", "human", "d", {1}, "p"), make_record("m1", "chatgpt", "d", {2}, "p")});
        CHECK(pair_index(one) == std::vector<TextPair>{{"h1", "m1"}});
        CHECK(pair_index(grid_set(2)).empty());

        std::vector<EmbeddingRecord> records;
        for (int i = 0; i < 3; ++i) {
            records.push_back(make_record("h" + std::to_string(i), "human", "d", {1}, "p" + std::to_string(i)));
            records.push_back(make_record("m" + std::to_string(i), "dolly", "d", {1}, "p" + std::to_string(i)));
        }
        records.push_back(make_record("u1", "human", "d", {1}));
        records.push_back(make_record("u2", "dolly", "d", {1}));
        const auto pairs = pair_index(EmbeddingSet::from_records(records));
        CHECK(pairs.size() == 3);
        for (const auto& p : pairs) {
            CHECK(p.human_id != "u1");
            CHECK(p.machine_id != "u2");
        }
        std::reverse(records.begin(), records.end());
        CHECK(pair_index(EmbeddingSet::from_records(records)) == pairs);
    }

    TEST_CASE("pair of two humans is a data error listing the ids") {
        auto bad = EmbeddingSet::from_records(
            {make_record("h1", "human", "d", {1}, "p"), make_record("h2", "human", "d", {2}, "p")});
        const auto msg = error_message([&] { pair_index(bad); });
        CHECK(msg.find("h1") != std::string::npos);
        CHECK(msg.find("h2") != std::string::npos);
        CHECK_THROWS_AS(pair_index(bad), DataError);
    }
}
