#include <doctest.h>

#include <cmath>

#include "llmcipher/adversarial.hpp"
#include "llmcipher/errors.hpp"
#include "support/fixtures.hpp"

using namespace llmcipher;

namespace {

std::vector<float> at_angle(double degrees) {
    const double r = degrees * 3.14159265358979323846 / 180.0;
    return {static_cast<float>(std::cos(r)), static_cast<float>(std::sin(r)), 0.0f};
}

/// cos(happy, glad) = 0.85, cos(happy, table) = 0.30.
EmbeddingTableSynonyms mood_table() {
    return EmbeddingTableSynonyms({{"happy", at_angle(0)},
                                   {"glad", at_angle(std::acos(0.85) * 180.0 / 3.14159265358979323846)},
                                   {"table", at_angle(std::acos(0.30) * 180.0 / 3.14159265358979323846)}});
}

EmbeddingTableSynonyms two_word_table() {
    return EmbeddingTableSynonyms({{"big", {1.0f, 0.0f, 0.0f}},
                                   {"large", {0.95f, 0.1f, 0.0f}},
                                   {"quick", {0.0f, 1.0f, 0.0f}},
                                   {"swift", {0.1f, 0.95f, 0.0f}},
                                   {"dog", {0.0f, 0.0f, 1.0f}}});
}

TableConfidenceOracle two_word_oracle() {
    return TableConfidenceOracle(
        {{"the", 0.9}, {"big", 0.5}, {"large", 0.1}, {"quick", 0.4}, {"swift", 0.05}, {"dog", 0.3}}, 0.001);
}

}  // namespace

TEST_SUITE("adversarial") {
    TEST_CASE("tokenizer round-trips whitespace and punctuation") {
        const std::string text = "  Hello,  world! (It's) fine...\n";
        const auto t = tokenize(text);
        CHECK(t.str() == text);
        CHECK(t.words.size() == 4);
        CHECK(t.words[0].core == "Hello");
        CHECK(t.words[0].suffix == ",");
        CHECK(t.words[2].prefix == "(");
        CHECK(t.words[2].core == "It's");
        CHECK(t.keys()[0] == "hello");
        CHECK(word_count(text) == 4);
        CHECK(tokenize("-- ...").keys() == std::vector<std::string>{"", ""});
    }

    TEST_CASE("high-confidence words rank first") {
        const TableConfidenceOracle oracle({{"the", 0.9}}, 0.001);
        const auto ranked = rank_target_words("the cat sat on the mat", oracle, PerturbationConfig{});
        CHECK(ranked == std::vector<std::size_t>{0, 4});
    }

    TEST_CASE("words below the threshold are never targeted") {
        const TableConfidenceOracle oracle({}, 0.001);
        CHECK(rank_target_words("nothing here qualifies", oracle, PerturbationConfig{}).empty());
        const auto result = perturb_text("Nothing here qualifies.", PerturbationConfig{}, oracle, mood_table());
        CHECK(result.perturbed_text == "Nothing here qualifies.");
        CHECK(result.substitutions.empty());
    }

    TEST_CASE("ranking is stable and repeatable") {
        const TableConfidenceOracle oracle({{"a", 0.5}, {"b", 0.5}, {"c", 0.7}}, 0.001);
        const auto r1 = rank_target_words("a b c a", oracle, PerturbationConfig{});
        CHECK(r1 == std::vector<std::size_t>{2, 0, 1, 3});
        CHECK(rank_target_words("a b c a", oracle, PerturbationConfig{}) == r1);
    }

    TEST_CASE("empty text is an input error") {
        const TableConfidenceOracle oracle({}, 0.5);
        CHECK_THROWS_AS(rank_target_words("   ", oracle, PerturbationConfig{}), InputError);
        CHECK_THROWS_AS(perturb_text("", PerturbationConfig{}, oracle, mood_table()), InputError);
    }

    TEST_CASE("synonym candidates filter by similarity") {
        const auto table = mood_table();
        const auto all = table.candidates("happy");
        REQUIRE(all.size() == 2);
        CHECK(all[0].word == "glad");
        CHECK(all[0].similarity == doctest::Approx(0.85).epsilon(1e-5));
        CHECK(all[1].similarity == doctest::Approx(0.30).epsilon(1e-5));
        const auto kept = candidate_synonyms("happy", table, PerturbationConfig{});
        REQUIRE(kept.size() == 1);
        CHECK(kept[0].word == "glad");
        CHECK(candidate_synonyms("zebra", table, PerturbationConfig{}).empty());
    }

    TEST_CASE("part-of-speech check") {
        CHECK(coarse_tag("quickly") == CoarseTag::adverb);
        CHECK(coarse_tag("happiness") == CoarseTag::noun);
        CHECK(coarse_tag("joyful") == CoarseTag::adjective);
        CHECK(coarse_tag("walked") == CoarseTag::verb);
        CHECK(coarse_tag("the") == CoarseTag::function);
        CHECK(coarse_tag("glad") == CoarseTag::unknown);
        CHECK(tags_compatible(CoarseTag::noun, CoarseTag::unknown));
        CHECK_FALSE(tags_compatible(CoarseTag::noun, CoarseTag::verb));

        const EmbeddingTableSynonyms table({{"rapidity", {1.0f, 0.0f}}, {"rapidly", {0.99f, 0.1f}}});
        CHECK(candidate_synonyms("rapidly", table, PerturbationConfig{}).empty());
        PerturbationConfig no_pos;
        no_pos.pos_check = false;
        CHECK(candidate_synonyms("rapidly", table, no_pos).size() == 1);
    }

    TEST_CASE("sentence similarity floor rejects drifting substitutions") {
        const EmbeddingTableSynonyms table({{"alpha", {1.0f, 0.0f}}, {"beta", {0.9f, 0.436f}}});
        const std::vector<std::string> words{"alpha"};
        PerturbationConfig config;
        config.sentence_similarity_floor = 0.8;
        CHECK(candidate_synonyms(words, 0, words, table, config).size() == 1);
        config.sentence_similarity_floor = 0.95;
        CHECK(candidate_synonyms(words, 0, words, table, config).empty());
    }

    TEST_CASE("exactly the two qualifying words are substituted") {
        const auto result =
            perturb_text("The big dog saw a quick cat.", PerturbationConfig{}, two_word_oracle(), two_word_table());
        REQUIRE(result.substitutions.size() == 2);
        CHECK(result.perturbed_text == "The large dog saw a swift cat.");
        CHECK(result.substitutions[0].original == "big");
        CHECK(result.substitutions[0].replacement == "large");
        CHECK(result.substitutions[1].replacement == "swift");
        for (const auto& s : result.substitutions) {
            CHECK(s.similarity >= 0.7);
            CHECK(s.confidence_after < s.confidence_before);
        }
    }

    TEST_CASE("case and punctuation survive substitution") {
        const auto result =
            perturb_text("BIG, Quick dog", PerturbationConfig{}, two_word_oracle(), two_word_table());
        CHECK(result.perturbed_text == "LARGE, Swift dog");
    }

    TEST_CASE("substitution count is capped") {
        PerturbationConfig config;
        config.max_word_perturbations = 1;
        const auto result =
            perturb_text("The big dog saw a quick cat.", config, two_word_oracle(), two_word_table());
        CHECK(result.substitutions.size() == 1);
    }

    TEST_CASE("n-gram oracle probabilities") {
        const auto oracle = NgramConfidenceOracle::fit("the cat sat\nthe cat ran\n", 0.5);
        CHECK(oracle.vocabulary_size() == 4);
        CHECK(oracle.token_count() == 6);
        const std::vector<std::string> words{"the", "cat"};
        const double unigram_the = (2.0 + 1.0) / (6.0 + 4.0 + 1.0);
        CHECK(oracle.word_confidence(words, 0) == doctest::Approx(unigram_the));
        const double unigram_cat = (2.0 + 1.0) / 11.0;
        CHECK(oracle.word_confidence(words, 1) == doctest::Approx(0.5 * 1.0 + 0.5 * unigram_cat));
        CHECK_THROWS_AS(NgramConfidenceOracle::fit("x", 1.5), ConfigError);
    }

    TEST_CASE("embedding table parsing") {
        const auto table = EmbeddingTableSynonyms::parse("# comment\nHappy 1 0\n\nglad 0.9 0.1\n");
        CHECK(table.size() == 2);
        CHECK(table.embedding("happy") != nullptr);
        CHECK_THROWS_AS(EmbeddingTableSynonyms::parse("a 1 x\n"), ParseError);
        CHECK_THROWS_AS(EmbeddingTableSynonyms::parse("a 1 2\nb 1\n"), DimensionError);
    }

    TEST_CASE("config validation") {
        PerturbationConfig c;
        c.low_prob_threshold = 0.0;
        CHECK_THROWS_AS(c.validate(), ConfigError);
        c = PerturbationConfig{};
        c.max_word_perturbations = 0;
        CHECK_THROWS_AS(c.validate(), ConfigError);
    }

    TEST_CASE("fixture texts keep word counts under the default oracles") {
        const auto oracle = NgramConfidenceOracle::fit(testing::perturbation_corpus_text());
        const auto table = EmbeddingTableSynonyms::parse(testing::synonym_table_text());
        std::size_t total = 0;
        for (const auto& text : testing::perturbation_texts(30)) {
            const auto r = perturb_text(text, PerturbationConfig{}, oracle, table);
            CHECK(word_count(r.perturbed_text) == word_count(text));
            total += r.substitutions.size();
        }
        CHECK(total > 0);
    }
}
